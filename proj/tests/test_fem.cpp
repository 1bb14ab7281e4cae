#include <doctest.h>

#include "pfopt/fem.hpp"

#include <cmath>
#include <random>

using namespace pfopt;

namespace {

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

// int over reference triangle of xi^p eta^q = p! q! / (p+q+2)!
double ref_monomial(int p, int q) {
    return factorial(p) * factorial(q) / factorial(p + q + 2);
}

Eigen::VectorXd random_p2v(const THSpace& space, std::mt19937& rng, bool zero_boundary) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::VectorXd u(space.p2v.n_dofs);
    for (int n = 0; n < space.p2.n_nodes; ++n) {
        bool zero = zero_boundary && space.p2_node_on_boundary[n];
        u[2 * n] = zero ? 0.0 : dist(rng);
        u[2 * n + 1] = zero ? 0.0 : dist(rng);
    }
    return u;
}

}  // namespace

TEST_CASE("quadrature rules integrate monomials to declared degree") {
    for (int degree : {1, 2, 4, 6}) {
        const QuadratureRule& qr = quadrature_rule(degree);
        double wsum = 0;
        for (double w : qr.weights) wsum += w;
        CHECK(wsum == doctest::Approx(0.5).epsilon(1e-14));
        for (int p = 0; p + 0 <= degree; ++p) {
            for (int q = 0; p + q <= degree; ++q) {
                double acc = 0;
                for (size_t k = 0; k < qr.points.size(); ++k) {
                    double xi = qr.points[k][1], eta = qr.points[k][2];
                    acc += qr.weights[k] * std::pow(xi, p) * std::pow(eta, q);
                }
                CHECK(acc == doctest::Approx(ref_monomial(p, q)).epsilon(1e-13));
            }
        }
    }
    CHECK_THROWS_AS(quadrature_rule(3), std::invalid_argument);
}

TEST_CASE("P2 dof map shares edge nodes consistently") {
    TriMesh m = generate_rect_mesh(1.0, 1.0, 0.34);
    DofMap p2 = DofMap::p2_scalar(m);
    // count occurrences of each edge dof; interior edges must appear twice
    std::map<int, int> uses;
    for (int t = 0; t < m.n_triangles(); ++t)
        for (int k = 3; k < 6; ++k) ++uses[p2.cell(t)[k]];
    int n_edges = 0;
    for (const auto& [dof, count] : uses) {
        CHECK(dof >= m.n_vertices());
        CHECK(count <= 2);
        ++n_edges;
    }
    CHECK(p2.n_dofs == m.n_vertices() + n_edges);
}

TEST_CASE("mass matrix: P1 row sums give vertex areas, total the domain area") {
    TriMesh m = generate_rect_mesh(1.7, 0.4, 0.1);
    SparseSystem sys = assemble(m, FormKind::Mass);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(sys.A.cols());
    Eigen::VectorXd rowsum = sys.A * ones;
    CHECK(rowsum.sum() == doctest::Approx(0.68).epsilon(1e-12));
    for (int i = 0; i < rowsum.size(); ++i) CHECK(rowsum[i] > 0.0);
}

TEST_CASE("stiffness matrix annihilates constants") {
    TriMesh m = generate_rect_mesh(1.0, 1.0, 0.3);
    SparseSystem sys = assemble(m, FormKind::Stiffness);
    Eigen::VectorXd c = Eigen::VectorXd::Constant(sys.A.cols(), 3.7);
    CHECK((sys.A * c).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("weighted mass with coefficient 2 equals twice the mass") {
    TriMesh m = generate_rect_mesh(1.0, 0.5, 0.2);
    Eigen::VectorXd two = Eigen::VectorXd::Constant(m.n_vertices(), 2.0);
    FormCoefficients fc;
    fc.scalar_p1 = &two;
    SparseSystem weighted = assemble(m, FormKind::WeightedMass, fc);
    SparseSystem mass = assemble(m, FormKind::Mass);
    Eigen::SparseMatrix<double, Eigen::RowMajor> diff = weighted.A - 2.0 * mass.A;
    CHECK(Eigen::Map<const Eigen::VectorXd>(diff.valuePtr(), diff.nonZeros())
              .lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("symmetric forms assemble symmetric matrices") {
    TriMesh m = generate_rect_mesh(0.8, 0.9, 0.25);
    for (FormKind form : {FormKind::Mass, FormKind::Stiffness, FormKind::SymGradStiffness}) {
        SparseSystem sys = assemble(m, form);
        Eigen::SparseMatrix<double, Eigen::RowMajor> diff =
            sys.A - Eigen::SparseMatrix<double, Eigen::RowMajor>(sys.A.transpose());
        double scale = Eigen::Map<const Eigen::VectorXd>(sys.A.valuePtr(), sys.A.nonZeros())
                           .lpNorm<Eigen::Infinity>();
        CHECK(Eigen::Map<const Eigen::VectorXd>(diff.valuePtr(), diff.nonZeros())
                  .lpNorm<Eigen::Infinity>() <= 1e-12 * scale);
    }
}

TEST_CASE("assemble rejects bad inputs") {
    TriMesh m = generate_rect_mesh(1.0, 1.0, 0.5);
    CHECK_THROWS_AS(assemble(m, FormKind::WeightedMass), std::invalid_argument);
    Eigen::VectorXd wrong(2);
    FormCoefficients fc;
    fc.scalar_p1 = &wrong;
    CHECK_THROWS_AS(assemble(m, FormKind::WeightedMass, fc), std::invalid_argument);
    CHECK_THROWS_AS(assemble(m, FormKind::ConvectionUGradV), std::invalid_argument);
}

TEST_CASE("trilinear form identities") {
    TriMesh m = generate_rect_mesh(1.0, 1.0, 0.2);
    THSpace space(m);
    std::mt19937 rng(5);

    SUBCASE("constant v gives zero") {
        Eigen::VectorXd u = random_p2v(space, rng, false);
        Eigen::VectorXd v = Eigen::VectorXd::Zero(space.p2v.n_dofs);
        for (int n = 0; n < space.p2.n_nodes; ++n) {
            v[2 * n] = 0.3;
            v[2 * n + 1] = -1.2;
        }
        Eigen::VectorXd w = random_p2v(space, rng, false);
        CHECK(std::abs(trilinear_b(m, space.p2v, u, v, w)) <= 1e-13);
    }

    SUBCASE("skew symmetry for constant u and boundary-vanishing v, w") {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(space.p2v.n_dofs);
        for (int n = 0; n < space.p2.n_nodes; ++n) {
            u[2 * n] = 0.8;
            u[2 * n + 1] = 0.45;
        }
        for (int rep = 0; rep < 50; ++rep) {
            Eigen::VectorXd v = random_p2v(space, rng, true);
            Eigen::VectorXd w = random_p2v(space, rng, true);
            double bvv = trilinear_b(m, space.p2v, u, v, v);
            double bvw = trilinear_b(m, space.p2v, u, v, w);
            double bwv = trilinear_b(m, space.p2v, u, w, v);
            double scale = std::max({1.0, std::abs(bvw), std::abs(bwv)});
            CHECK(std::abs(bvv) <= 1e-12 * scale);
            CHECK(std::abs(bvw + bwv) <= 1e-12 * scale);
        }
    }

    SUBCASE("continuity bound with K_Omega") {
        double komega = k_omega(m.total_area(), 2);
        for (int rep = 0; rep < 100; ++rep) {
            Eigen::VectorXd u = random_p2v(space, rng, true);
            Eigen::VectorXd v = random_p2v(space, rng, false);
            Eigen::VectorXd w = random_p2v(space, rng, true);
            double b = std::abs(trilinear_b(m, space.p2v, u, v, w));
            double bound = komega * space.grad_l2_norm(u) * space.grad_l2_norm(v) *
                           space.grad_l2_norm(w);
            CHECK(b <= bound * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("k_omega values") {
    CHECK(k_omega(4.0, 2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(k_omega(1.0, 3) == doctest::Approx(2.0 * std::sqrt(2.0) / 3.0).epsilon(1e-12));
    CHECK(k_omega(1.0, 3) == doctest::Approx(0.942809).epsilon(1e-6));
    CHECK(k_omega(0.68, 2) == doctest::Approx(0.412311).epsilon(1e-6));
    CHECK_THROWS_AS(k_omega(1.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(k_omega(-1.0, 2), std::invalid_argument);
}

TEST_CASE("solve_sparse: identity, SPD 2x2, and singular rejection") {
    SparseSystem id;
    id.A.resize(3, 3);
    id.A.setIdentity();
    id.rhs.resize(3);
    id.rhs << 1.0, -2.0, 0.5;
    Eigen::VectorXd x = solve_sparse(id);
    CHECK((x - id.rhs).lpNorm<Eigen::Infinity>() <= 1e-14);

    SparseSystem spd;
    spd.A.resize(2, 2);
    std::vector<Eigen::Triplet<double>> trip{{0, 0, 2.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 2.0}};
    spd.A.setFromTriplets(trip.begin(), trip.end());
    spd.rhs.resize(2);
    spd.rhs << 3.0, 3.0;
    x = solve_sparse(spd);
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-13));

    SparseSystem zero;
    zero.A.resize(2, 2);
    zero.A.setZero();
    zero.rhs = Eigen::VectorXd::Ones(2);
    CHECK_THROWS_AS(solve_sparse(zero), SolveFailure);
}

TEST_CASE("integrate: constants, coordinates, and P1 gradients") {
    TriMesh m = generate_rect_mesh(1.0, 1.0, 0.21);
    CHECK(integrate(m, [](const Eigen::Vector2d&) { return 1.0; }) ==
          doctest::Approx(1.0).epsilon(1e-13));
    CHECK(integrate(m, [](const Eigen::Vector2d& x) { return x.x(); }) ==
          doctest::Approx(0.5).epsilon(1e-13));

    Eigen::VectorXd xfield(m.n_vertices());
    for (int v = 0; v < m.n_vertices(); ++v) xfield[v] = m.vertices[v].x();
    CHECK(integrate_p1(m, xfield) == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(integrate_grad_sq_p1(m, xfield) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("div coupling pairs constants with boundary flux zero fields") {
    TriMesh m = generate_rect_mesh(1.0, 1.0, 0.25);
    THSpace space(m);
    SparseSystem B = assemble(m, FormKind::DivCoupling);
    std::mt19937 rng(2);
    Eigen::VectorXd u = random_p2v(space, rng, true);  // zero trace
    Eigen::VectorXd div_weak = B.A * u;
    // sum over P1 rows = int div u = boundary flux = 0
    CHECK(std::abs(div_weak.sum()) <= 1e-13);
}
