#include "pfopt/functionals.hpp"

#include <cmath>

namespace pfopt {

namespace {

Eigen::Matrix2d stress_at(const THSpace& space, const StateFields& state, double mu, int t,
                          const std::array<double, 3>& bary) {
    Eigen::Matrix2d gu = space.p2v_gradient(t, bary, state.u);  // (a,b) = d_a u_b
    double p = space.p1_value(t, bary, state.p);
    // sigma_ij = mu (d_i u_j + d_j u_i) - p delta_ij
    return mu * (gu + gu.transpose()) - p * Eigen::Matrix2d::Identity();
}

}  // namespace

double eval_force_volume(const THSpace& space, const Eigen::VectorXd& phi,
                         const StateFields& state, const Eigen::Vector2d& a, const Material& mat,
                         double mu) {
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(4);
    double total = 0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        Eigen::Vector2d gphi = mesh.p1_gradient(t, phi);
        double det = 2.0 * mesh.signed_area(t);
        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            double phiq = space.p1_value(t, l, phi);
            double m = mat.modulation(phiq).value;
            Eigen::Matrix2d sigma = stress_at(space, state, mu, t, l);
            total += qr.weights[q] * det * m * gphi.dot(sigma * a);
        }
    }
    return total;
}

double IsolineSet::total_length() const {
    double len = 0;
    for (const auto& s : segments) len += (s.p1 - s.p0).norm();
    return len;
}

IsolineSet extract_isoline(const TriMesh& mesh, const Eigen::VectorXd& phi) {
    IsolineSet out;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        // classify: phi > 0 fluid, phi <= 0 solid
        Eigen::Vector2d pts[2];
        int found = 0;
        for (int k = 0; k < 3 && found < 2; ++k) {
            int a = tri[k], b = tri[(k + 1) % 3];
            bool pa = phi[a] > 0, pb = phi[b] > 0;
            if (pa == pb) continue;
            double s = phi[a] / (phi[a] - phi[b]);  // phi(a + s(b-a)) = 0
            pts[found++] = mesh.vertices[a] + s * (mesh.vertices[b] - mesh.vertices[a]);
        }
        if (found != 2) continue;
        Eigen::Vector2d g = mesh.p1_gradient(t, phi);
        double gn = g.norm();
        if (gn < 1e-14) {
            ++out.degenerate_skipped;
            continue;
        }
        out.segments.push_back({pts[0], pts[1], g / gn, t});
    }
    return out;
}

namespace {

// Nodal-averaged velocity gradient recovery (per P2 node, arithmetic element mean).
std::vector<Eigen::Matrix2d> recover_nodal_gradients(const THSpace& space,
                                                     const Eigen::VectorXd& u) {
    std::vector<Eigen::Matrix2d> acc(space.p2.n_nodes, Eigen::Matrix2d::Zero());
    std::vector<int> count(space.p2.n_nodes, 0);
    static const std::array<std::array<double, 3>, 6> node_bary = {{{1, 0, 0},
                                                                    {0, 1, 0},
                                                                    {0, 0, 1},
                                                                    {0.5, 0.5, 0},
                                                                    {0, 0.5, 0.5},
                                                                    {0.5, 0, 0.5}}};
    for (int t = 0; t < space.mesh->n_triangles(); ++t) {
        const int* cd = space.p2.cell(t);
        for (int k = 0; k < 6; ++k) {
            acc[cd[k]] += space.p2v_gradient(t, node_bary[k], u);
            ++count[cd[k]];
        }
    }
    for (int n = 0; n < space.p2.n_nodes; ++n)
        if (count[n] > 0) acc[n] /= count[n];
    return acc;
}

}  // namespace

double eval_force_surface(const THSpace& space, const Eigen::VectorXd& phi,
                          const StateFields& state, const Eigen::Vector2d& a, double mu,
                          StressSampling sampling) {
    IsolineSet iso = extract_isoline(*space.mesh, phi);
    if (iso.segments.empty()) throw std::runtime_error("eval_force_surface: no interface");

    std::vector<Eigen::Matrix2d> nodal;
    if (sampling == StressSampling::NodalAveraged) nodal = recover_nodal_gradients(space, state.u);

    double total = 0;
    for (const auto& seg : iso.segments) {
        Eigen::Vector2d mid = 0.5 * (seg.p0 + seg.p1);
        const auto& tri = space.mesh->triangles[seg.triangle];
        // barycentric coordinates of the midpoint in its containing triangle
        const Eigen::Vector2d& A = space.mesh->vertices[tri[0]];
        const Eigen::Vector2d& B = space.mesh->vertices[tri[1]];
        const Eigen::Vector2d& C = space.mesh->vertices[tri[2]];
        double det = (B.x() - A.x()) * (C.y() - A.y()) - (C.x() - A.x()) * (B.y() - A.y());
        double l1 = ((mid.x() - A.x()) * (C.y() - A.y()) - (C.x() - A.x()) * (mid.y() - A.y())) / det;
        double l2 = ((B.x() - A.x()) * (mid.y() - A.y()) - (mid.x() - A.x()) * (B.y() - A.y())) / det;
        std::array<double, 3> bary{1.0 - l1 - l2, l1, l2};

        Eigen::Matrix2d sigma;
        if (sampling == StressSampling::Containing) {
            sigma = stress_at(space, state, mu, seg.triangle, bary);
        } else {
            double N[6];
            p2_shape(bary, N);
            Eigen::Matrix2d gu = Eigen::Matrix2d::Zero();
            const int* cd = space.p2.cell(seg.triangle);
            for (int k = 0; k < 6; ++k) gu += N[k] * nodal[cd[k]];
            double p = space.p1_value(seg.triangle, bary, state.p);
            sigma = mu * (gu + gu.transpose()) - p * Eigen::Matrix2d::Identity();
        }
        total += (seg.p1 - seg.p0).norm() * a.dot(sigma * seg.normal);
    }
    return total;
}

ObjectiveValue eval_objective(const THSpace& space, const Eigen::VectorXd& phi,
                              const StateFields& state, const ForceFunctional& functional,
                              const Material& mat, double mu, double eps, double gamma,
                              bool fold_c0) {
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(4);
    const double gl = mat.gl_scale(gamma, fold_c0);

    ObjectiveValue out;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        Eigen::Vector2d gphi = mesh.p1_gradient(t, phi);
        double det = 2.0 * mesh.signed_area(t);
        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            double w = qr.weights[q] * det;
            double phiq = space.p1_value(t, l, phi);
            out.gl_grad += w * gl * 0.5 * eps * gphi.squaredNorm();
            out.gl_pot += w * gl * mat.psi(phiq).psi / eps;
            if (functional.kind != FunctionalKind::GinzburgLandauOnly) {
                Eigen::Vector2d uq = space.p2v_value(t, l, state.u);
                out.porous += w * 0.5 * mat.alpha(phiq).value * uq.squaredNorm();
            }
        }
    }
    switch (functional.kind) {
        case FunctionalKind::Drag:
            out.force = eval_force_volume(space, phi, state, functional.drag_dir, mat, mu);
            break;
        case FunctionalKind::Ratio:
            out.force = -eval_ratio(space, phi, state, mat, mu, functional);
            break;
        case FunctionalKind::GinzburgLandauOnly:
            break;
    }
    return out;
}

double eval_ratio(const THSpace& space, const Eigen::VectorXd& phi, const StateFields& state,
                  const Material& mat, double mu, const ForceFunctional& functional) {
    double fd = eval_force_volume(space, phi, state, functional.drag_dir, mat, mu);
    double fl = eval_force_volume(space, phi, state, functional.lift_dir, mat, mu);
    if (fd == 0.0) throw std::runtime_error("eval_ratio: degenerate ratio, F^D = 0");
    return fl / fd;
}

}  // namespace pfopt
