#include "pfopt/flow_adjoint.hpp"

#include <cmath>

namespace pfopt {

FunctionalLinearization linearize_functional(const THSpace& space,
                                             const ForceFunctional& functional,
                                             const StateFields& state,
                                             const Eigen::VectorXd& phi, const Material& mat,
                                             double mu) {
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(4);

    FunctionalLinearization lin;
    lin.n_qp = static_cast<int>(qr.points.size());

    lin.force_drag = eval_force_volume(space, phi, state, functional.drag_dir, mat, mu);
    lin.force_lift = eval_force_volume(space, phi, state, functional.lift_dir, mat, mu);
    if (functional.kind == FunctionalKind::Ratio) {
        if (lin.force_drag == 0.0)
            throw std::runtime_error("linearize_functional: degenerate ratio, F^D = 0");
        lin.a_eff = (-1.0 / lin.force_drag) * functional.lift_dir +
                    (lin.force_lift / (lin.force_drag * lin.force_drag)) * functional.drag_dir;
    } else {
        lin.a_eff = functional.drag_dir;
    }

    const int n = mesh.n_triangles() * lin.n_qp;
    lin.d2h.resize(n);
    lin.d3h.resize(n);
    lin.d4h.resize(n);
    lin.h.resize(n);

    for (int t = 0; t < mesh.n_triangles(); ++t) {
        Eigen::Vector2d gphi = mesh.p1_gradient(t, phi);
        for (int q = 0; q < lin.n_qp; ++q) {
            const auto& l = qr.points[q];
            Eigen::Matrix2d gu = space.p2v_gradient(t, l, state.u);
            double pq = space.p1_value(t, l, state.p);
            Eigen::Matrix2d sigma =
                mu * (gu + gu.transpose()) - pq * Eigen::Matrix2d::Identity();
            int idx = lin.index(t, q);
            lin.d2h[idx] = mu * (gphi * lin.a_eff.transpose() + lin.a_eff * gphi.transpose());
            lin.d3h[idx] = -lin.a_eff.dot(gphi);
            lin.d4h[idx] = sigma * lin.a_eff;
            lin.h[idx] = gphi.dot(lin.d4h[idx]);
        }
    }
    lin.vartheta = compute_vartheta(space, lin, phi, mat);
    return lin;
}

double compute_vartheta(const THSpace& space, const FunctionalLinearization& lin,
                        const Eigen::VectorXd& phi, const Material& mat) {
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(4);
    double acc = 0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        double det = 2.0 * mesh.signed_area(t);
        for (int q = 0; q < lin.n_qp; ++q) {
            double phiq = space.p1_value(t, qr.points[q], phi);
            acc += qr.weights[q] * det * mat.modulation(phiq).value * lin.d3h[lin.index(t, q)];
        }
    }
    return acc / mesh.total_area();
}

namespace {

// rhs = [ alpha u . v + M D2h : grad v  |  M D3h s  |  0 ]
Eigen::VectorXd adjoint_rhs(const THSpace& space, const Eigen::VectorXd& phi,
                            const StateFields& state, const FunctionalLinearization& lin,
                            const Material& mat) {
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(4);
    const int n_u = space.p2v.n_dofs;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_u + space.n1() + 1);

    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        Eigen::Matrix2d jac;
        jac.col(0) = mesh.vertices[tri[1]] - mesh.vertices[tri[0]];
        jac.col(1) = mesh.vertices[tri[2]] - mesh.vertices[tri[0]];
        double det = jac.determinant();
        Eigen::Matrix2d jit = jac.inverse().transpose();
        const int* cdv = space.p2v.cell(t);
        const int* cdp = space.p1.cell(t);

        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            double w = qr.weights[q] * det;
            double N[6];
            double dN[6][2];
            p2_shape(l, N);
            p2_shape_grad_ref(l, dN);
            double phiq = space.p1_value(t, l, phi);
            double m = mat.modulation(phiq).value;
            double alpha = mat.alpha(phiq).value;
            Eigen::Vector2d uq = space.p2v_value(t, l, state.u);
            int idx = lin.index(t, static_cast<int>(q));
            const Eigen::Matrix2d& d2h = lin.d2h[idx];

            for (int i = 0; i < 6; ++i) {
                Eigen::Vector2d gi = jit * Eigen::Vector2d(dN[i][0], dN[i][1]);
                for (int c = 0; c < 2; ++c) {
                    double r = N[i] * alpha * uq[c];
                    r += m * gi.dot(d2h.col(c));  // D2h : grad v, v = N_i e_c
                    rhs[cdv[2 * i + c]] += w * r;
                }
            }
            for (int i = 0; i < 3; ++i)
                rhs[n_u + cdp[i]] += w * l[i] * m * lin.d3h[idx];
        }
    }
    return rhs;
}

}  // namespace

AdjointFields solve_adjoint(const THSpace& space, const Eigen::VectorXd& phi,
                            const StateFields& state, const FunctionalLinearization& lin,
                            const Material& mat, double mu, const InflowProfile& g) {
    const int n_u = space.p2v.n_dofs;
    const int n_p = space.n1();
    const std::vector<char> mask = dirichlet_u_mask(space, g);

    Eigen::SparseMatrix<double, Eigen::RowMajor> J =
        state_jacobian_raw(space, phi, mat, mu, state.u, g.dirichlet_everywhere);
    Eigen::SparseMatrix<double, Eigen::RowMajor> A = J.transpose();

    // q = 0 on the Dirichlet part of the boundary
    std::vector<Eigen::Triplet<double>> kept;
    kept.reserve(A.nonZeros());
    for (int r = 0; r < A.outerSize(); ++r) {
        bool constrained = r < n_u && mask[r / 2];
        if (constrained) {
            kept.emplace_back(r, r, 1.0);
            continue;
        }
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A, r); it; ++it)
            kept.emplace_back(r, it.col(), it.value());
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> Ac(A.rows(), A.cols());
    Ac.setFromTriplets(kept.begin(), kept.end());
    Ac.makeCompressed();

    Eigen::VectorXd rhs = adjoint_rhs(space, phi, state, lin, mat);
    for (int n = 0; n < space.p2.n_nodes; ++n)
        if (mask[n]) rhs[2 * n] = rhs[2 * n + 1] = 0.0;

    Eigen::VectorXd x = solve_sparse(Ac, rhs, 1e-9);

    AdjointFields out;
    out.q = x.head(n_u);
    // the solve's multiplier block carries +div in the weak form; flip to the
    // grad-pi convention used for reporting
    out.pi = -x.segment(n_u, n_p);
    out.vartheta = x[n_u + n_p];
    return out;
}

StateFields solve_linearized_state(const THSpace& space, const Eigen::VectorXd& phi,
                                   const StateFields& state, const Material& mat, double mu,
                                   const InflowProfile& g, const Eigen::VectorXd& zeta) {
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(4);
    const int n_u = space.p2v.n_dofs;
    const int n_p = space.n1();
    const std::vector<char> mask = dirichlet_u_mask(space, g);

    Eigen::SparseMatrix<double, Eigen::RowMajor> J =
        state_jacobian_raw(space, phi, mat, mu, state.u, g.dirichlet_everywhere);

    std::vector<Eigen::Triplet<double>> kept;
    kept.reserve(J.nonZeros());
    for (int r = 0; r < J.outerSize(); ++r) {
        bool constrained = r < n_u && mask[r / 2];
        if (constrained) {
            kept.emplace_back(r, r, 1.0);
            continue;
        }
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(J, r); it; ++it)
            kept.emplace_back(r, it.col(), it.value());
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> Jc(J.rows(), J.cols());
    Jc.setFromTriplets(kept.begin(), kept.end());
    Jc.makeCompressed();

    // rhs: -(alpha'(phi) zeta u) . v on the momentum rows
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_u + n_p + 1);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        double det = 2.0 * mesh.signed_area(t);
        const int* cdv = space.p2v.cell(t);
        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            double w = qr.weights[q] * det;
            double N[6];
            p2_shape(l, N);
            double phiq = space.p1_value(t, l, phi);
            double zetaq = space.p1_value(t, l, zeta);
            double da = mat.alpha(phiq).deriv;
            Eigen::Vector2d uq = space.p2v_value(t, l, state.u);
            for (int i = 0; i < 6; ++i)
                for (int c = 0; c < 2; ++c)
                    rhs[cdv[2 * i + c]] -= w * N[i] * da * zetaq * uq[c];
        }
    }
    for (int n = 0; n < space.p2.n_nodes; ++n)
        if (mask[n]) rhs[2 * n] = rhs[2 * n + 1] = 0.0;

    Eigen::VectorXd x = solve_sparse(Jc, rhs, 1e-9);
    return {x.head(n_u), x.segment(n_u, n_p)};
}

}  // namespace pfopt
