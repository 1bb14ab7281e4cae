#include "pfopt/flow_state.hpp"

#include <cmath>

namespace pfopt {

namespace {

Eigen::Vector2d marker_normal(BoundaryMarker m) {
    switch (m) {
        case BoundaryMarker::Left: return {-1, 0};
        case BoundaryMarker::Right: return {1, 0};
        case BoundaryMarker::Bottom: return {0, -1};
        case BoundaryMarker::Top: return {0, 1};
    }
    return {0, 0};
}

}  // namespace

double InflowProfile::net_flux(const TriMesh& mesh) const {
    // 2-point Gauss per boundary edge (exact for the quadratic trace of g)
    static const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    double flux = 0;
    for (const auto& [edge, marker] : mesh.boundary_edges) {
        Eigen::Vector2d a = mesh.vertices[edge[0]], b = mesh.vertices[edge[1]];
        double len = (b - a).norm();
        Eigen::Vector2d nu = marker_normal(marker);
        for (double s : gp) flux += 0.5 * len * g(a + s * (b - a)).dot(nu);
    }
    return flux;
}

void InflowProfile::validate(const TriMesh& mesh) const {
    double perimeter = 0, gmax = 0;
    for (const auto& [edge, marker] : mesh.boundary_edges) {
        Eigen::Vector2d a = mesh.vertices[edge[0]], b = mesh.vertices[edge[1]];
        perimeter += (b - a).norm();
        gmax = std::max({gmax, g(a).norm(), g(0.5 * (a + b)).norm()});
    }
    if (!dirichlet_everywhere) return;  // outflow carries the imbalance
    double flux = std::abs(net_flux(mesh));
    if (flux > 1e-10 * std::max(perimeter * gmax, 1e-30))
        throw std::invalid_argument("InflowProfile: boundary data has nonzero net flux");
}

std::vector<char> dirichlet_u_mask(const THSpace& space, const InflowProfile& g) {
    std::vector<char> constrained(space.p2.n_nodes, 0);
    const TriMesh& mesh = *space.mesh;
    for (const auto& [edge, marker] : mesh.boundary_edges) {
        if (!g.dirichlet_everywhere && marker == BoundaryMarker::Right) continue;
        constrained[edge[0]] = 1;
        constrained[edge[1]] = 1;
        constrained[space.edge_p2_node.at(edge)] = 1;
    }
    return constrained;
}

namespace {

struct SystemLayout {
    int n_u, n_p, n_total;
    bool mean_row;
    explicit SystemLayout(const THSpace& s, bool mean)
        : n_u(s.p2v.n_dofs), n_p(s.n1()), n_total(s.p2v.n_dofs + s.n1() + 1), mean_row(mean) {}
    int p_row(int j) const { return n_u + j; }
    int rho_row() const { return n_u + n_p; }
};

// Assembles residual and (optionally) Jacobian of the monolithic system
//   R_v   = a(phi) u.v + mu grad u : grad v + (u.grad)u.v - p div v - f.v
//   R_s   = (s, div u) + rho (s, 1)
//   R_rho = (p, 1)                      [identity row rho = 0 when disabled]
// Dirichlet rows are zeroed/identity-replaced by the caller.
void assemble_system(const THSpace& space, const Eigen::VectorXd& phi, const Material& mat,
                     double mu, const BodyForce& f, const Eigen::VectorXd& u,
                     const Eigen::VectorXd& p, double rho, bool with_convection,
                     bool full_newton, const SystemLayout& lay, Eigen::VectorXd* residual,
                     std::vector<Eigen::Triplet<double>>* trip) {
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(4);

    if (residual) residual->setZero(lay.n_total);

    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        Eigen::Matrix2d jac;
        jac.col(0) = mesh.vertices[tri[1]] - mesh.vertices[tri[0]];
        jac.col(1) = mesh.vertices[tri[2]] - mesh.vertices[tri[0]];
        const double det = jac.determinant();
        const Eigen::Matrix2d jit = jac.inverse().transpose();
        const int* cdv = space.p2v.cell(t);
        const int* cdp = space.p1.cell(t);

        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            const double w = qr.weights[q] * det;
            double N[6];
            double dN[6][2];
            p2_shape(l, N);
            p2_shape_grad_ref(l, dN);
            Eigen::Vector2d grad[6];
            for (int i = 0; i < 6; ++i) grad[i] = jit * Eigen::Vector2d(dN[i][0], dN[i][1]);

            Eigen::Vector2d x = l[0] * mesh.vertices[tri[0]] + l[1] * mesh.vertices[tri[1]] +
                                l[2] * mesh.vertices[tri[2]];
            Eigen::Vector2d uq = Eigen::Vector2d::Zero();
            Eigen::Matrix2d gu = Eigen::Matrix2d::Zero();  // (a,b) = d_a u_b
            for (int k = 0; k < 6; ++k) {
                Eigen::Vector2d uk(u[cdv[2 * k]], u[cdv[2 * k + 1]]);
                uq += N[k] * uk;
                gu += grad[k] * uk.transpose();
            }
            double pq = l[0] * p[tri[0]] + l[1] * p[tri[1]] + l[2] * p[tri[2]];
            double phiq = l[0] * phi[tri[0]] + l[1] * phi[tri[1]] + l[2] * phi[tri[2]];
            double alpha = mat.alpha(phiq).value;
            Eigen::Vector2d fq = f(x);
            Eigen::Vector2d conv = gu.transpose() * uq;  // (u.grad)u

            if (residual) {
                for (int i = 0; i < 6; ++i) {
                    Eigen::Vector2d mom = alpha * uq + (with_convection ? conv : Eigen::Vector2d::Zero()) - fq;
                    // momentum: (alpha u + conv - f).v N_i + mu grad u : grad v - p div v
                    for (int c = 0; c < 2; ++c) {
                        double r = N[i] * mom[c];
                        r += mu * grad[i].dot(gu.col(c));
                        r -= pq * grad[i][c];
                        (*residual)[cdv[2 * i + c]] += w * r;
                    }
                }
                double divu = gu(0, 0) + gu(1, 1);
                for (int i = 0; i < 3; ++i) {
                    (*residual)[lay.p_row(cdp[i])] += w * l[i] * (divu + (lay.mean_row ? rho : 0.0));
                }
                if (lay.mean_row) (*residual)[lay.rho_row()] += w * pq;
            }

            if (trip) {
                for (int i = 0; i < 6; ++i) {
                    for (int j = 0; j < 6; ++j) {
                        double mass = N[i] * N[j];
                        double stiff = grad[i].dot(grad[j]);
                        double conv_ugradv = with_convection ? N[i] * uq.dot(grad[j]) : 0.0;
                        for (int ci = 0; ci < 2; ++ci) {
                            // (du.grad)u . v block (full Newton only)
                            if (with_convection && full_newton) {
                                for (int cj = 0; cj < 2; ++cj)
                                    trip->emplace_back(cdv[2 * i + ci], cdv[2 * j + cj],
                                                       w * mass * gu(cj, ci));
                            }
                            trip->emplace_back(cdv[2 * i + ci], cdv[2 * j + ci],
                                               w * (alpha * mass + mu * stiff + conv_ugradv));
                        }
                    }
                    // -p div v
                    for (int j = 0; j < 3; ++j)
                        for (int c = 0; c < 2; ++c)
                            trip->emplace_back(cdv[2 * i + c], lay.p_row(cdp[j]),
                                               -w * l[j] * grad[i][c]);
                }
                // continuity: (s, div du)
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 6; ++j)
                        for (int c = 0; c < 2; ++c)
                            trip->emplace_back(lay.p_row(cdp[i]), cdv[2 * j + c],
                                               w * l[i] * grad[j][c]);
                if (lay.mean_row) {
                    for (int i = 0; i < 3; ++i) {
                        trip->emplace_back(lay.p_row(cdp[i]), lay.rho_row(), w * l[i]);
                        trip->emplace_back(lay.rho_row(), lay.p_row(cdp[i]), w * l[i]);
                    }
                }
            }
        }
    }
    if (trip && !lay.mean_row) trip->emplace_back(lay.rho_row(), lay.rho_row(), 1.0);
}

}  // namespace

StateFields solve_state(const THSpace& space, const Eigen::VectorXd& phi, const Material& mat,
                        double mu, const BodyForce& f, const InflowProfile& g,
                        const NewtonSettings& settings, const StateFields* init) {
    if (!(mu > 0)) throw std::invalid_argument("solve_state: viscosity must be positive");
    if (phi.size() != space.n1()) throw std::invalid_argument("solve_state: phi size mismatch");
    g.validate(*space.mesh);

    const SystemLayout lay(space, g.dirichlet_everywhere);
    const std::vector<char> mask = dirichlet_u_mask(space, g);

    Eigen::VectorXd u;
    Eigen::VectorXd p;
    double rho = 0;
    if (init && init->u.size() == lay.n_u) {
        u = init->u;
        p = init->p;
    } else {
        u = Eigen::VectorXd::Zero(lay.n_u);
        p = Eigen::VectorXd::Zero(lay.n_p);
    }
    // impose boundary values exactly
    for (int n = 0; n < space.p2.n_nodes; ++n) {
        if (!mask[n]) continue;
        Eigen::Vector2d gv = g.g(space.p2_coords[n]);
        u[2 * n] = gv.x();
        u[2 * n + 1] = gv.y();
    }

    auto residual_at = [&](const Eigen::VectorXd& uu, const Eigen::VectorXd& pp, double rr,
                           bool convection) {
        Eigen::VectorXd r;
        assemble_system(space, phi, mat, mu, f, uu, pp, rr, convection, true, lay, &r, nullptr);
        for (int n = 0; n < space.p2.n_nodes; ++n)
            if (mask[n]) r[2 * n] = r[2 * n + 1] = 0.0;
        if (!lay.mean_row) r[lay.rho_row()] = rr;
        return r;
    };

    auto newton_matrix = [&](const Eigen::VectorXd& uu, bool convection, bool full) {
        std::vector<Eigen::Triplet<double>> trip;
        assemble_system(space, phi, mat, mu, f, uu, p, rho, convection, full, lay, nullptr, &trip);
        std::vector<Eigen::Triplet<double>> kept;
        kept.reserve(trip.size() + space.p2.n_nodes * 2);
        for (const auto& e : trip) {
            int r = e.row();
            if (r < lay.n_u && mask[r / 2]) continue;
            kept.push_back(e);
        }
        for (int n = 0; n < space.p2.n_nodes; ++n)
            if (mask[n]) {
                kept.emplace_back(2 * n, 2 * n, 1.0);
                kept.emplace_back(2 * n + 1, 2 * n + 1, 1.0);
            }
        Eigen::SparseMatrix<double, Eigen::RowMajor> A(lay.n_total, lay.n_total);
        A.setFromTriplets(kept.begin(), kept.end());
        A.makeCompressed();
        return A;
    };

    // Stokes initialization when no warm start was provided
    if (!(init && init->u.size() == lay.n_u)) {
        Eigen::VectorXd r = residual_at(u, p, rho, false);
        auto A = newton_matrix(u, false, false);
        Eigen::VectorXd d = solve_sparse(A, -r, 1e-9);
        u += d.head(lay.n_u);
        p += d.segment(lay.n_u, lay.n_p);
        rho += d[lay.rho_row()];
    }

    Eigen::VectorXd r = residual_at(u, p, rho, true);
    double rn = r.norm();
    if (settings.residual_history) settings.residual_history->push_back(rn);
    for (int it = 0; it < settings.max_iter; ++it) {
        if (rn <= settings.tol) return {u, p};
        auto A = newton_matrix(u, true, !settings.picard);
        Eigen::VectorXd d = solve_sparse(A, -r, 1e-9);

        double lambda = 1.0;
        for (int h = 0; h <= settings.max_halvings; ++h) {
            Eigen::VectorXd u_try = u + lambda * d.head(lay.n_u);
            Eigen::VectorXd p_try = p + lambda * d.segment(lay.n_u, lay.n_p);
            double rho_try = rho + lambda * d[lay.rho_row()];
            Eigen::VectorXd r_try = residual_at(u_try, p_try, rho_try, true);
            double rn_try = r_try.norm();
            if (rn_try < (1.0 - 1e-4 * lambda) * rn || rn_try <= settings.tol) {
                u = std::move(u_try);
                p = std::move(p_try);
                rho = rho_try;
                r = std::move(r_try);
                rn = rn_try;
                if (settings.residual_history) settings.residual_history->push_back(rn);
                break;
            }
            if (h == settings.max_halvings)
                throw NewtonError("solve_state: line search stalled", rn, u, p);
            lambda *= 0.5;
        }
    }
    if (rn <= settings.tol) return {u, p};
    throw NewtonError("solve_state: no convergence within max iterations", rn, u, p);
}

StateFields solve_state_robust(const THSpace& space, const Eigen::VectorXd& phi,
                               const Material& mat, double mu, const BodyForce& f,
                               const InflowProfile& g, const NewtonSettings& settings,
                               const StateFields* init) {
    try {
        return solve_state(space, phi, mat, mu, f, g, settings, init);
    } catch (const NewtonError&) {
        // geometric continuation in mu, factor 1/2
        double mu_start = mu * 64.0;
        StateFields s = solve_state(space, phi, mat, mu_start, f, g, settings, nullptr);
        double m = mu_start;
        while (m > mu) {
            m = std::max(mu, 0.5 * m);
            s = solve_state(space, phi, mat, m, f, g, settings, &s);
        }
        return s;
    }
}

double state_residual(const THSpace& space, const StateFields& state, const Eigen::VectorXd& phi,
                      const Material& mat, double mu, const BodyForce& f,
                      const InflowProfile& g) {
    const SystemLayout lay(space, g.dirichlet_everywhere);
    const std::vector<char> mask = dirichlet_u_mask(space, g);
    Eigen::VectorXd r;
    assemble_system(space, phi, mat, mu, f, state.u, state.p, 0.0, true, true, lay, &r, nullptr);
    for (int n = 0; n < space.p2.n_nodes; ++n)
        if (mask[n]) r[2 * n] = r[2 * n + 1] = 0.0;
    if (!lay.mean_row) r[lay.rho_row()] = 0.0;
    return r.norm();
}

double uniqueness_margin(const THSpace& space, const StateFields& state, double mu) {
    double komega = k_omega(space.mesh->total_area(), 2);
    return mu / komega - space.grad_l2_norm(state.u);
}

Eigen::SparseMatrix<double, Eigen::RowMajor> state_jacobian_raw(
    const THSpace& space, const Eigen::VectorXd& phi, const Material& mat, double mu,
    const Eigen::VectorXd& u, bool with_mean_row) {
    const SystemLayout lay(space, with_mean_row);
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd p_dummy = Eigen::VectorXd::Zero(lay.n_p);
    assemble_system(space, phi, mat, mu, zero_force(), u, p_dummy, 0.0, true, true, lay, nullptr,
                    &trip);
    Eigen::SparseMatrix<double, Eigen::RowMajor> A(lay.n_total, lay.n_total);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    return A;
}

}  // namespace pfopt
