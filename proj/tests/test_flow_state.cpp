#include <doctest.h>

#include "pfopt/flow_state.hpp"

#include <cmath>

using namespace pfopt;

namespace {

Material default_material(double alpha_bar, double eps) {
    return Material::make(PotentialParams{1e6}, InterpolationParams{alpha_bar, eps, 0.99},
                          {ModulationVariant::SqrtPsi, 0.0, 1e-12});
}

// divergence-free manufactured solution with zero net boundary flux
Eigen::Vector2d mms_u(const Eigen::Vector2d& x) {
    return {std::sin(M_PI * x.y()), std::sin(M_PI * x.x())};
}

double mms_p(const Eigen::Vector2d& x) {
    return std::sin(M_PI * x.x()) * std::sin(M_PI * x.y()) - 4.0 / (M_PI * M_PI);
}

BodyForce mms_force(double mu) {
    return [mu](const Eigen::Vector2d& x) {
        double sx = std::sin(M_PI * x.x()), cx = std::cos(M_PI * x.x());
        double sy = std::sin(M_PI * x.y()), cy = std::cos(M_PI * x.y());
        Eigen::Vector2d lap = mu * M_PI * M_PI * Eigen::Vector2d(sy, sx);
        Eigen::Vector2d conv = M_PI * Eigen::Vector2d(sx * cy, sy * cx);
        Eigen::Vector2d gradp = M_PI * Eigen::Vector2d(cx * sy, sx * cy);
        return Eigen::Vector2d(lap + conv + gradp);
    };
}

struct MmsErrors {
    double u_l2, p_l2;
};

MmsErrors mms_errors(const THSpace& space, const StateFields& st) {
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(6);
    double ue = 0, pe = 0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        double det = 2.0 * mesh.signed_area(t);
        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            Eigen::Vector2d x = l[0] * mesh.vertices[tri[0]] + l[1] * mesh.vertices[tri[1]] +
                                l[2] * mesh.vertices[tri[2]];
            double w = qr.weights[q] * det;
            ue += w * (space.p2v_value(t, l, st.u) - mms_u(x)).squaredNorm();
            double ph = space.p1_value(t, l, st.p);
            pe += w * std::pow(ph - mms_p(x), 2);
        }
    }
    return {std::sqrt(ue), std::sqrt(pe)};
}

MmsErrors solve_mms(double h, double mu, std::vector<double>* history = nullptr) {
    TriMesh mesh = generate_rect_mesh(1.0, 1.0, h);
    THSpace space(mesh);
    Eigen::VectorXd phi = Eigen::VectorXd::Ones(space.n1());  // alpha off
    Material mat = default_material(1.0, 1.0);

    InflowProfile g;
    g.g = mms_u;
    NewtonSettings settings;
    settings.residual_history = history;
    StateFields st = solve_state(space, phi, mat, mu, mms_force(mu), g, settings);
    return mms_errors(space, st);
}

}  // namespace

TEST_CASE("zero data gives the zero solution") {
    TriMesh mesh = generate_rect_mesh(1.0, 0.5, 0.2);
    THSpace space(mesh);
    Material mat = default_material(2.0, 0.1);
    Eigen::VectorXd phi(space.n1());
    for (int v = 0; v < space.n1(); ++v)
        phi[v] = std::sin(3.0 * mesh.vertices[v].x());  // arbitrary design

    InflowProfile g;
    g.g = [](const Eigen::Vector2d&) { return Eigen::Vector2d::Zero(); };
    StateFields st = solve_state(space, phi, mat, 1.0, zero_force(), g);
    CHECK(st.u.lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(st.p.lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("manufactured Navier-Stokes solution converges at the expected orders") {
    double mu = 1.0;
    MmsErrors e1 = solve_mms(1.0 / 8, mu);
    MmsErrors e2 = solve_mms(1.0 / 16, mu);
    double order_u = std::log2(e1.u_l2 / e2.u_l2);
    double order_p = std::log2(e1.p_l2 / e2.p_l2);
    CHECK(order_u >= 2.7);
    CHECK(order_p >= 1.7);
}

TEST_CASE("Newton shows a quadratic tail on the manufactured problem") {
    std::vector<double> history;
    solve_mms(1.0 / 8, 0.5, &history);
    REQUIRE(history.size() >= 3);
    // pairs where the next residual is still above the direct-solver floor
    for (size_t i = 0; i + 1 < history.size(); ++i) {
        if (history[i] < 1e-3 && history[i] > 1e-7) {
            double ratio = history[i + 1] / (history[i] * history[i]);
            CHECK(ratio < 1e3);
        }
    }
}

TEST_CASE("solved states conserve mass discretely") {
    TriMesh mesh = generate_rect_mesh(1.0, 1.0, 0.15);
    THSpace space(mesh);
    Material mat = default_material(1.0, 0.05);
    Eigen::VectorXd phi(space.n1());
    for (int v = 0; v < space.n1(); ++v)
        phi[v] = (mesh.vertices[v] - Eigen::Vector2d(0.5, 0.5)).norm() < 0.25 ? -1.0 : 1.0;

    InflowProfile g;  // default (1,0) everywhere
    StateFields st = solve_state(space, phi, mat, 0.5, zero_force(), g);

    SparseSystem div = assemble(mesh, FormKind::DivCoupling);
    Eigen::VectorXd weak_div = div.A * st.u;
    CHECK(weak_div.lpNorm<Eigen::Infinity>() <= 1e-9);
    // zero-mean pressure
    CHECK(std::abs(integrate_p1(mesh, st.p)) <= 1e-10 * std::max(1.0, st.p.norm()));
}

TEST_CASE("Brinkman shear flow matches the 1D closed form") {
    // alpha_eps(-1) = alpha_bar here (eps = 1); with the exact profile
    // prescribed on the whole boundary, u = (sinh(k y)/sinh(k), 0), p = 0
    // solves the full system with k = sqrt(alpha/mu).
    double theta = 0.99;
    double alpha_target = 100.0;
    double alpha_bar = alpha_target;
    Material mat = Material::make(PotentialParams{1e6}, InterpolationParams{alpha_bar, 1.0, theta},
                                  {ModulationVariant::Half, 0.0, 1e-12});

    TriMesh mesh = generate_rect_mesh(1.0, 1.0, 1.0 / 32);
    THSpace space(mesh);
    Eigen::VectorXd phi = Eigen::VectorXd::Constant(space.n1(), -1.0);
    double k = std::sqrt(alpha_target);
    InflowProfile g;
    g.g = [k](const Eigen::Vector2d& x) {
        return Eigen::Vector2d(std::sinh(k * x.y()) / std::sinh(k), 0.0);
    };
    StateFields st = solve_state(space, phi, mat, 1.0, zero_force(), g);

    for (int n = 0; n < space.p2.n_nodes; ++n) {
        const Eigen::Vector2d& x = space.p2_coords[n];
        double exact = std::sinh(k * x.y()) / std::sinh(k);
        CHECK(st.u[2 * n] == doctest::Approx(exact).epsilon(0.02).scale(1.0));
        CHECK(std::abs(st.u[2 * n + 1]) <= 0.01);
    }
}

TEST_CASE("strong Brinkman damping kills the velocity inside the solid") {
    // obstacle block in a channel: the flow bypasses it, the inside is dead
    Material mat = Material::make(PotentialParams{1e6}, InterpolationParams{1e6, 1.0, 0.99},
                                  {ModulationVariant::Half, 0.0, 1e-12});
    TriMesh mesh = generate_rect_mesh(2.0, 1.0, 0.1);
    THSpace space(mesh);
    Eigen::VectorXd phi(space.n1());
    auto inside = [](const Eigen::Vector2d& x) {
        return std::abs(x.x() - 1.0) < 0.3 && std::abs(x.y() - 0.5) < 0.25;
    };
    for (int v = 0; v < space.n1(); ++v) phi[v] = inside(mesh.vertices[v]) ? -1.0 : 1.0;
    InflowProfile g;  // unit through-flow
    StateFields st = solve_state(space, phi, mat, 1.0, zero_force(), g);

    double worst = 0;
    for (int n = 0; n < space.p2.n_nodes; ++n) {
        const Eigen::Vector2d& x = space.p2_coords[n];
        if (std::abs(x.x() - 1.0) < 0.15 && std::abs(x.y() - 0.5) < 0.12)
            worst = std::max(worst, Eigen::Vector2d(st.u[2 * n], st.u[2 * n + 1]).norm());
    }
    CHECK(worst <= 1e-2);
}

TEST_CASE("uniqueness margin") {
    TriMesh mesh = generate_rect_mesh(1.0, 1.0, 0.25);
    THSpace space(mesh);

    StateFields zero;
    zero.u = Eigen::VectorXd::Zero(space.p2v.n_dofs);
    zero.p = Eigen::VectorXd::Zero(space.n1());
    CHECK(uniqueness_margin(space, zero, 2.0) == doctest::Approx(4.0).epsilon(1e-12));

    // u = (x, -y): grad norm sqrt(2), K = 1/2, margin = 10/0.5 - sqrt(2)
    StateFields lin;
    lin.u = space.interpolate_p2v([](const Eigen::Vector2d& x) {
        return Eigen::Vector2d(x.x(), -x.y());
    });
    lin.p = Eigen::VectorXd::Zero(space.n1());
    CHECK(uniqueness_margin(space, lin, 10.0) ==
          doctest::Approx(20.0 - std::sqrt(2.0)).epsilon(1e-10));
    CHECK(uniqueness_margin(space, lin, 10.0) == doctest::Approx(18.586).epsilon(1e-4));
}

TEST_CASE("state residual: small at the solution, grows under perturbation") {
    TriMesh mesh = generate_rect_mesh(1.0, 1.0, 0.2);
    THSpace space(mesh);
    Material mat = default_material(1.0, 1.0);
    Eigen::VectorXd phi = Eigen::VectorXd::Ones(space.n1());
    InflowProfile g;
    g.g = mms_u;
    double mu = 1.0;
    StateFields st = solve_state(space, phi, mat, mu, mms_force(mu), g);

    double r0 = state_residual(space, st, phi, mat, mu, mms_force(mu), g);
    CHECK(r0 <= 1e-10);

    StateFields bad = st;
    for (int n = 0; n < space.p2.n_nodes; ++n) {
        if (!space.p2_node_on_boundary[n]) {
            bad.u[2 * n] += 1.0;
            break;
        }
    }
    CHECK(state_residual(space, bad, phi, mat, mu, mms_force(mu), g) > 1e3 * r0);
}

TEST_CASE("manufactured interpolant residual decreases with refinement") {
    Material mat = default_material(1.0, 1.0);
    double mu = 1.0;
    InflowProfile g;
    g.g = mms_u;

    double prev = -1;
    for (double h : {0.25, 0.125, 0.0625}) {
        TriMesh mesh = generate_rect_mesh(1.0, 1.0, h);
        THSpace space(mesh);
        Eigen::VectorXd phi = Eigen::VectorXd::Ones(space.n1());
        StateFields interp;
        interp.u = space.interpolate_p2v(mms_u);
        interp.p.resize(space.n1());
        for (int v = 0; v < space.n1(); ++v) interp.p[v] = mms_p(mesh.vertices[v]);
        double r = state_residual(space, interp, phi, mat, mu, mms_force(mu), g);
        if (prev > 0) CHECK(r < 0.6 * prev);
        prev = r;
    }
}

TEST_CASE("incompatible boundary data is rejected") {
    TriMesh mesh = generate_rect_mesh(1.0, 1.0, 0.5);
    THSpace space(mesh);
    Material mat = default_material(1.0, 1.0);
    Eigen::VectorXd phi = Eigen::VectorXd::Ones(space.n1());
    InflowProfile g;
    g.g = [](const Eigen::Vector2d& x) { return Eigen::Vector2d(x.x(), 0.0); };  // net outflow
    CHECK_THROWS_AS(solve_state(space, phi, mat, 1.0, zero_force(), g),
                    std::invalid_argument);
}
