#include "pfopt/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

namespace pfopt {

double adaptive_tau(const TriMesh& mesh, const Eigen::VectorXd& w, double xi, double tau_max) {
    if (!(xi > 0)) throw std::invalid_argument("adaptive_tau: xi must be positive");
    double tau = std::numeric_limits<double>::max();
    bool any = false;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        double gnorm = mesh.p1_gradient(t, w).norm() * std::sqrt(mesh.area(t));
        if (gnorm < 1e-14) continue;
        any = true;
        tau = std::min(tau, xi * mesh.diameter(t) / gnorm);
    }
    if (!any) return tau_max;
    return std::min(tau, tau_max);
}

namespace {

// P1 load vector of a quadrature-point function: out_i = int c(x) zeta_i dx
Eigen::VectorXd p1_load(const THSpace& space,
                        const std::function<double(int, int, const std::array<double, 3>&)>& c) {
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(4);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(space.n1());
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        double det = 2.0 * mesh.signed_area(t);
        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            double w = qr.weights[q] * det;
            double v = c(t, static_cast<int>(q), l);
            for (int i = 0; i < 3; ++i) out[tri[i]] += w * l[i] * v;
        }
    }
    return out;
}

}  // namespace

JphiLoad assemble_Jphi(const THSpace& space, JphiForm form, const Eigen::VectorXd& phi_k,
                       const StateFields& state, const Material& mat,
                       const FunctionalLinearization& lin, const BodyForce& f) {
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(4);
    JphiLoad out;

    if (form == JphiForm::Rewritten) {
        // (J_phi, zeta) = int M(phi^k) (f - alpha(phi^k) u - (u.grad)u) . a zeta
        out.load = p1_load(space, [&](int t, int, const std::array<double, 3>& l) {
            double phiq = space.p1_value(t, l, phi_k);
            double m = mat.modulation(phiq).value;
            double alpha = mat.alpha(phiq).value;
            Eigen::Vector2d uq = space.p2v_value(t, l, state.u);
            Eigen::Matrix2d gu = space.p2v_gradient(t, l, state.u);
            const auto& tri = mesh.triangles[t];
            Eigen::Vector2d x = l[0] * mesh.vertices[tri[0]] + l[1] * mesh.vertices[tri[1]] +
                                l[2] * mesh.vertices[tri[2]];
            Eigen::Vector2d force = f(x) - alpha * uq - gu.transpose() * uq;
            return m * force.dot(lin.a_eff);
        });
        return out;
    }

    // DivForm: explicit part int M(phi^k) D4h . grad zeta,
    // implicit part int M'(phi^k) (D4h . grad phi^{k+1}) zeta
    out.load = Eigen::VectorXd::Zero(space.n1());
    std::vector<Eigen::Triplet<double>> trip;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        double det = 2.0 * mesh.signed_area(t);
        Eigen::Vector2d gz[3];
        for (int k = 0; k < 3; ++k) gz[k] = mesh.p1_basis_grad(t, k);
        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            double w = qr.weights[q] * det;
            double phiq = space.p1_value(t, l, phi_k);
            ModulationValues m = mat.modulation(phiq);
            const Eigen::Vector2d& d4h = lin.d4h[lin.index(t, static_cast<int>(q))];
            for (int i = 0; i < 3; ++i) {
                out.load[tri[i]] += w * m.value * d4h.dot(gz[i]);
                for (int j = 0; j < 3; ++j)
                    trip.emplace_back(tri[i], tri[j], w * m.deriv * l[i] * d4h.dot(gz[j]));
            }
        }
    }
    out.coupling.resize(space.n1(), space.n1());
    out.coupling.setFromTriplets(trip.begin(), trip.end());
    out.coupling.makeCompressed();
    out.has_coupling = true;
    return out;
}

Eigen::VectorXd assemble_reduced_gradient(const THSpace& space, const Eigen::VectorXd& phi,
                                          const StateFields& state, const AdjointFields& adjoint,
                                          const FunctionalLinearization& lin, const Material& mat,
                                          double eps, double gamma, bool fold_c0) {
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(4);
    const double gl = mat.gl_scale(gamma, fold_c0);
    const bool coupled = state.u.size() > 0;

    Eigen::VectorXd out = Eigen::VectorXd::Zero(space.n1());
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        double det = 2.0 * mesh.signed_area(t);
        Eigen::Vector2d gphi = mesh.p1_gradient(t, phi);
        Eigen::Vector2d gz[3];
        for (int k = 0; k < 3; ++k) gz[k] = mesh.p1_basis_grad(t, k);
        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            double w = qr.weights[q] * det;
            double phiq = space.p1_value(t, l, phi);
            PsiValues pv = mat.psi(phiq);
            double scalar = gl / eps * pv.dpsi();
            Eigen::Vector2d vec = gl * eps * gphi;
            if (coupled) {
                double aq = mat.alpha(phiq).deriv;
                Eigen::Vector2d uq = space.p2v_value(t, l, state.u);
                Eigen::Vector2d qq = space.p2v_value(t, l, adjoint.q);
                ModulationValues m = mat.modulation(phiq);
                int idx = lin.index(t, static_cast<int>(q));
                scalar += aq * (0.5 * uq.squaredNorm() - uq.dot(qq));
                scalar += m.deriv * lin.h[idx];
                vec += m.value * lin.d4h[idx];
            }
            for (int i = 0; i < 3; ++i)
                out[tri[i]] += w * (scalar * l[i] + vec.dot(gz[i]));
        }
    }
    return out;
}

ChStepResult ch_step(const THSpace& space, const Eigen::VectorXd& phi_k,
                     const StateFields* state, const AdjointFields* adjoint,
                     const JphiLoad& jphi, const Material& mat, double eps, double gamma,
                     bool fold_c0, double tau, const ChStepSettings& settings) {
    if (!(tau > 0)) throw std::invalid_argument("ch_step: tau must be positive");
    const TriMesh& mesh = *space.mesh;
    const QuadratureRule& qr = quadrature_rule(4);
    const int n = space.n1();
    const double gl = mat.gl_scale(gamma, fold_c0);
    const bool coupled = state != nullptr;
    const bool com = settings.com_constraint;
    const int n_total = 2 * n + (com ? 1 : 0);

    SparseSystem mass = assemble(mesh, FormKind::Mass);
    SparseSystem stiff = assemble(mesh, FormKind::Stiffness);

    // explicit pieces: concave part at phi^k, adjoint coupling, functional load
    Eigen::VectorXd explicit_b = p1_load(space, [&](int t, int, const std::array<double, 3>& l) {
        double phiq = space.p1_value(t, l, phi_k);
        double v = gl / eps * mat.psi(phiq).dpsi_minus;
        if (coupled && adjoint) {
            Eigen::Vector2d uq = space.p2v_value(t, l, state->u);
            Eigen::Vector2d qq = space.p2v_value(t, l, adjoint->q);
            v -= mat.alpha(phiq).deriv * uq.dot(qq);
        }
        return v;
    });
    if (jphi.load.size() == n) explicit_b += jphi.load;

    Eigen::VectorXd gvec;  // center-of-mass constraint row
    if (com) {
        double c = com_y(mesh, phi_k);
        gvec = p1_load(space, [&](int t, int, const std::array<double, 3>& l) {
            const auto& tri = mesh.triangles[t];
            Eigen::Vector2d x = l[0] * mesh.vertices[tri[0]] + l[1] * mesh.vertices[tri[1]] +
                                l[2] * mesh.vertices[tri[2]];
            return x.y() - c;
        });
    }

    Eigen::VectorXd phi = phi_k;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    double eta = 0.0;

    auto residual = [&](const Eigen::VectorXd& ph, const Eigen::VectorXd& ww, double et) {
        Eigen::VectorXd r(n_total);
        // A rows: (phi - phi_k, zeta) + tau (grad w, grad zeta)
        r.head(n) = mass.A * (ph - phi_k) + tau * (stiff.A * ww);
        // B rows: (w, zeta) - gl eps (grad phi, grad zeta) - implicit terms - explicit
        Eigen::VectorXd implicit_b = p1_load(space, [&](int t, int, const std::array<double, 3>& l) {
            double phiq = space.p1_value(t, l, ph);
            double v = gl / eps * mat.psi(phiq).dpsi_plus;
            if (coupled) {
                Eigen::Vector2d uq = space.p2v_value(t, l, state->u);
                v += 0.5 * mat.alpha(phiq).deriv * uq.squaredNorm();
            }
            return v;
        });
        r.segment(n, n) = mass.A * ww - gl * eps * (stiff.A * ph) - implicit_b - explicit_b;
        if (jphi.has_coupling) r.segment(n, n) -= jphi.coupling * ph;
        if (com) {
            r.segment(n, n) -= et * gvec;
            r[2 * n] = gvec.dot(ph - phi_k);
        }
        return r;
    };

    ChStepResult result;
    Eigen::VectorXd r = residual(phi, w, eta);
    double r0 = std::max(1.0, r.norm());
    for (int it = 0; it < settings.max_iter; ++it) {
        if (r.norm() <= settings.tol * r0) break;
        // Jacobian
        std::vector<Eigen::Triplet<double>> trip;
        for (int row = 0; row < mass.A.outerSize(); ++row)
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator itA(mass.A, row);
                 itA; ++itA) {
                trip.emplace_back(row, itA.col(), itA.value());               // A: d/dphi
                trip.emplace_back(n + row, n + itA.col(), itA.value());       // B: d/dw
            }
        for (int row = 0; row < stiff.A.outerSize(); ++row)
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator itA(stiff.A, row);
                 itA; ++itA) {
                trip.emplace_back(row, n + itA.col(), tau * itA.value());     // A: d/dw
                trip.emplace_back(n + row, itA.col(), -gl * eps * itA.value());  // B: d/dphi
            }
        // B rows, nonsmooth implicit coefficient: -W(psi''_+(phi) gl/eps + alpha''(phi)|u|^2/2)
        for (int t = 0; t < mesh.n_triangles(); ++t) {
            const auto& tri = mesh.triangles[t];
            double det = 2.0 * mesh.signed_area(t);
            for (size_t q = 0; q < qr.points.size(); ++q) {
                const auto& l = qr.points[q];
                double wq = qr.weights[q] * det;
                double phiq = space.p1_value(t, l, phi);
                double c = gl / eps * mat.d2psi_plus(phiq);
                if (coupled)
                    c += 0.5 * mat.d2alpha(phiq) * space.p2v_value(t, l, state->u).squaredNorm();
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j)
                        trip.emplace_back(n + tri[i], tri[j], -wq * c * l[i] * l[j]);
            }
        }
        if (jphi.has_coupling)
            for (int row = 0; row < jphi.coupling.outerSize(); ++row)
                for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator itA(
                         jphi.coupling, row);
                     itA; ++itA)
                    trip.emplace_back(n + row, itA.col(), -itA.value());
        if (com) {
            for (int i = 0; i < n; ++i) {
                if (gvec[i] != 0.0) {
                    trip.emplace_back(n + i, 2 * n, -gvec[i]);
                    trip.emplace_back(2 * n, i, gvec[i]);
                }
            }
        }
        Eigen::SparseMatrix<double, Eigen::RowMajor> J(n_total, n_total);
        J.setFromTriplets(trip.begin(), trip.end());
        J.makeCompressed();

        Eigen::VectorXd d = solve_sparse(J, -r, 1e-8);
        phi += d.head(n);
        w += d.segment(n, n);
        if (com) eta += d[2 * n];
        r = residual(phi, w, eta);
        result.newton_iters = it + 1;
    }
    if (r.norm() > settings.tol * r0 && r.norm() > 1e-6)
        throw NewtonError("ch_step: semismooth Newton did not converge", r.norm(), phi, w);

    result.phi = std::move(phi);
    result.w = std::move(w);
    result.com_multiplier = eta;
    return result;
}

double com_y(const TriMesh& mesh, const Eigen::VectorXd& phi) {
    const QuadratureRule& qr = quadrature_rule(4);
    double num = 0, den = 0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        double det = 2.0 * mesh.signed_area(t);
        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            double w = qr.weights[q] * det;
            double phiq = l[0] * phi[tri[0]] + l[1] * phi[tri[1]] + l[2] * phi[tri[2]];
            Eigen::Vector2d x = l[0] * mesh.vertices[tri[0]] + l[1] * mesh.vertices[tri[1]] +
                                l[2] * mesh.vertices[tri[2]];
            double solid = 0.5 * (1.0 - phiq);
            num += w * solid * x.y();
            den += w * solid;
        }
    }
    if (den <= 1e-14) throw std::runtime_error("com_y: empty obstacle");
    return num / den;
}

Eigen::VectorXd apply_com_constraint(const Eigen::VectorXd& load, const THSpace& space,
                                     const Eigen::VectorXd& phi) {
    const TriMesh& mesh = *space.mesh;
    double c = com_y(mesh, phi);
    Eigen::VectorXd gvec(space.n1());
    {
        const QuadratureRule& qr = quadrature_rule(4);
        gvec.setZero();
        for (int t = 0; t < mesh.n_triangles(); ++t) {
            const auto& tri = mesh.triangles[t];
            double det = 2.0 * mesh.signed_area(t);
            for (size_t q = 0; q < qr.points.size(); ++q) {
                const auto& l = qr.points[q];
                double w = qr.weights[q] * det;
                Eigen::Vector2d x = l[0] * mesh.vertices[tri[0]] + l[1] * mesh.vertices[tri[1]] +
                                    l[2] * mesh.vertices[tri[2]];
                for (int i = 0; i < 3; ++i) gvec[tri[i]] += w * l[i] * (x.y() - c);
            }
        }
    }
    SparseSystem mass = assemble(mesh, FormKind::Mass);
    SparseSystem stiff = assemble(mesh, FormKind::Stiffness);
    Eigen::VectorXd zg = solve_sparse(mass.A, gvec, 1e-10);
    Eigen::VectorXd zl = solve_sparse(mass.A, load, 1e-10);
    double sgg = zg.dot(stiff.A * zg);
    if (sgg < 1e-300) {
        std::cerr << "apply_com_constraint: degenerate constraint gradient, skipped\n";
        return load;
    }
    double sgl = zg.dot(stiff.A * zl);
    return load - (sgl / sgg) * gvec;
}

double GradientCheckReport::min_rel_error() const {
    double best = std::numeric_limits<double>::infinity();
    for (double e : rel_errors) best = std::min(best, e);
    return best;
}

namespace {

Material material_from(const RunConfig& cfg) {
    PotentialParams pot{cfg.model.s};
    InterpolationParams interp{cfg.model.alpha_bar, cfg.model.eps, cfg.model.theta};
    ModulationChoice mod;
    mod.variant = cfg.model.modulation == "half" ? ModulationVariant::Half
                                                 : ModulationVariant::SqrtPsi;
    mod.delta_eps = cfg.model.delta_eps;
    return Material::make(pot, interp, mod);
}

ForceFunctional functional_from(const RunConfig& cfg) {
    ForceFunctional f;
    f.kind = cfg.functional.type == "ratio" ? FunctionalKind::Ratio : FunctionalKind::Drag;
    f.drag_dir = cfg.functional.drag_dir;
    f.lift_dir = cfg.functional.lift_dir;
    return f;
}

InflowProfile inflow_from(const RunConfig& cfg) {
    InflowProfile g;
    Eigen::Vector2d gval = cfg.flow.g;
    g.g = [gval](const Eigen::Vector2d&) { return gval; };
    g.dirichlet_everywhere = cfg.flow.dirichlet_outflow;
    return g;
}

BodyForce force_from(const RunConfig& cfg) {
    Eigen::Vector2d fval = cfg.flow.f;
    return [fval](const Eigen::Vector2d&) { return fval; };
}

// Transition profile of the relaxed obstacle well: sine ramp over width pi*eps.
double circle_phase(const Eigen::Vector2d& x, const Eigen::Vector2d& center, double radius,
                    double eps) {
    double d = (x - center).norm() - radius;
    double z = std::clamp(d / eps, -M_PI / 2.0, M_PI / 2.0);
    return std::sin(z);
}

// Bucketed point-in-triangle lookup for mesh-to-mesh transfer.
struct P1Transfer {
    const TriMesh* src;
    const Eigen::VectorXd* field;
    double x0, y0, hx, hy;
    int nx, ny;
    std::vector<std::vector<int>> buckets;

    P1Transfer(const TriMesh& mesh, const Eigen::VectorXd& f) : src(&mesh), field(&f) {
        double x1 = -1e300, y1 = -1e300;
        x0 = y0 = 1e300;
        for (const auto& v : mesh.vertices) {
            x0 = std::min(x0, v.x());
            y0 = std::min(y0, v.y());
            x1 = std::max(x1, v.x());
            y1 = std::max(y1, v.y());
        }
        int target = std::max(1, static_cast<int>(std::sqrt(mesh.n_triangles())));
        nx = ny = target;
        hx = (x1 - x0) / nx + 1e-300;
        hy = (y1 - y0) / ny + 1e-300;
        buckets.resize(static_cast<size_t>(nx) * ny);
        for (int t = 0; t < mesh.n_triangles(); ++t) {
            const auto& tri = mesh.triangles[t];
            double bx0 = 1e300, by0 = 1e300, bx1 = -1e300, by1 = -1e300;
            for (int k = 0; k < 3; ++k) {
                const auto& v = mesh.vertices[tri[k]];
                bx0 = std::min(bx0, v.x());
                by0 = std::min(by0, v.y());
                bx1 = std::max(bx1, v.x());
                by1 = std::max(by1, v.y());
            }
            int i0 = std::clamp(static_cast<int>((bx0 - x0) / hx), 0, nx - 1);
            int i1 = std::clamp(static_cast<int>((bx1 - x0) / hx), 0, nx - 1);
            int j0 = std::clamp(static_cast<int>((by0 - y0) / hy), 0, ny - 1);
            int j1 = std::clamp(static_cast<int>((by1 - y0) / hy), 0, ny - 1);
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) buckets[j * nx + i].push_back(t);
        }
    }

    double operator()(const Eigen::Vector2d& x) const {
        int i = std::clamp(static_cast<int>((x.x() - x0) / hx), 0, nx - 1);
        int j = std::clamp(static_cast<int>((x.y() - y0) / hy), 0, ny - 1);
        int best = -1;
        double best_violation = 1e300;
        for (int t : buckets[j * nx + i]) {
            const auto& tri = src->triangles[t];
            const Eigen::Vector2d& a = src->vertices[tri[0]];
            const Eigen::Vector2d& b = src->vertices[tri[1]];
            const Eigen::Vector2d& c = src->vertices[tri[2]];
            double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
            double l1 =
                ((x.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (x.y() - a.y())) / det;
            double l2 =
                ((b.x() - a.x()) * (x.y() - a.y()) - (x.x() - a.x()) * (b.y() - a.y())) / det;
            double l0 = 1.0 - l1 - l2;
            double violation = -std::min({l0, l1, l2});
            if (violation < best_violation) {
                best_violation = violation;
                best = t;
            }
            if (violation <= 1e-12) break;
        }
        if (best < 0) return src->p1_value_at(x, *field);  // slow path
        const auto& tri = src->triangles[best];
        const Eigen::Vector2d& a = src->vertices[tri[0]];
        const Eigen::Vector2d& b = src->vertices[tri[1]];
        const Eigen::Vector2d& c = src->vertices[tri[2]];
        double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
        double l1 = ((x.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (x.y() - a.y())) / det;
        double l2 = ((b.x() - a.x()) * (x.y() - a.y()) - (x.x() - a.x()) * (b.y() - a.y())) / det;
        double l0 = 1.0 - l1 - l2;
        return l0 * (*field)[tri[0]] + l1 * (*field)[tri[1]] + l2 * (*field)[tri[2]];
    }
};

}  // namespace

Eigen::VectorXd read_phi_file_impl(const std::string& path, int n);

Eigen::VectorXd initial_phase_field(const TriMesh& mesh, const RunConfig& cfg) {
    if (cfg.obstacle.shape == "from_file") {
        // values must match the generator mesh of the configured resolution
        return read_phi_file_impl(cfg.obstacle.file, mesh.n_vertices());
    }
    Eigen::VectorXd phi(mesh.n_vertices());
    for (int v = 0; v < mesh.n_vertices(); ++v)
        phi[v] = circle_phase(mesh.vertices[v], cfg.obstacle.center, cfg.obstacle.radius,
                              cfg.model.eps);
    return phi;
}

namespace {

// Iterative refinement toward the configured floor, driven by the jump
// indicator of the given fields; fields are re-sampled through `resample`.
struct AdaptResult {
    TriMesh mesh;
    Eigen::VectorXd phi;
    Eigen::VectorXd w;  // empty if unused
};

AdaptResult adapt_mesh(const TriMesh& start, const RunConfig& cfg,
                       const std::function<double(const Eigen::Vector2d&)>& phi_at,
                       const std::function<double(const Eigen::Vector2d&)>* w_at) {
    TriMesh mesh = start;
    auto sample = [&](const TriMesh& m, const std::function<double(const Eigen::Vector2d&)>& f) {
        Eigen::VectorXd out(m.n_vertices());
        for (int v = 0; v < m.n_vertices(); ++v) out[v] = f(m.vertices[v]);
        return out;
    };
    Eigen::VectorXd phi = sample(mesh, phi_at);
    Eigen::VectorXd w;
    for (int round = 0; round < cfg.mesh.max_rounds; ++round) {
        if (mesh.n_triangles() >= cfg.mesh.max_triangles) break;
        Eigen::VectorXd eta = jump_indicator(mesh, phi);
        if (w_at) {
            w = sample(mesh, *w_at);
            Eigen::VectorXd eta_w = jump_indicator(mesh, w);
            eta = (eta.array().square() + eta_w.array().square()).sqrt();
        }
        if (eta.maxCoeff() <= 0) break;
        std::vector<int> marked = dorfler_mark(eta, cfg.mesh.dorfler);
        std::vector<int> eligible;
        for (int t : marked)
            if (mesh.diameter(t) > cfg.mesh.min_h) eligible.push_back(t);
        if (eligible.empty()) break;
        mesh = refine(mesh, eligible).mesh;
        phi = sample(mesh, phi_at);
    }
    AdaptResult out;
    out.phi = std::move(phi);
    if (w_at) out.w = sample(mesh, *w_at);
    out.mesh = std::move(mesh);
    return out;
}

// Chemical potential consistent with the phase equation at a single state
// (both psi' parts at the same phi), via one mass solve.
Eigen::VectorXd chemical_potential(const THSpace& space, const Eigen::VectorXd& phi,
                                   const StateFields* state, const AdjointFields* adjoint,
                                   const JphiLoad& jphi, const Material& mat, double eps,
                                   double gamma, bool fold_c0) {
    const double gl = mat.gl_scale(gamma, fold_c0);
    SparseSystem mass = assemble(*space.mesh, FormKind::Mass);
    SparseSystem stiff = assemble(*space.mesh, FormKind::Stiffness);
    Eigen::VectorXd b = p1_load(space, [&](int t, int, const std::array<double, 3>& l) {
        double phiq = space.p1_value(t, l, phi);
        double v = gl / eps * mat.psi(phiq).dpsi();
        if (state) {
            Eigen::Vector2d uq = space.p2v_value(t, l, state->u);
            v += 0.5 * mat.alpha(phiq).deriv * uq.squaredNorm();
            if (adjoint) v -= mat.alpha(phiq).deriv * uq.dot(space.p2v_value(t, l, adjoint->q));
        }
        return v;
    });
    b += gl * eps * (stiff.A * phi);
    b += jphi.total(phi);
    return solve_sparse(mass.A, b, 1e-10);
}

}  // namespace

GradientCheckReport fd_gradient_check(const RunConfig& cfg, const Eigen::VectorXd* direction,
                                      const std::vector<double>& deltas) {
    Material mat = material_from(cfg);
    ForceFunctional functional = functional_from(cfg);
    InflowProfile g = inflow_from(cfg);
    BodyForce f = force_from(cfg);
    const bool gl_only = cfg.functional.type == "drag" && cfg.model.alpha_bar == 0.0;

    TriMesh base = generate_rect_mesh(cfg.width, cfg.height, cfg.mesh.h0);
    auto phi_at = [&](const Eigen::Vector2d& x) {
        return circle_phase(x, cfg.obstacle.center, cfg.obstacle.radius, cfg.model.eps);
    };
    AdaptResult adapted = adapt_mesh(base, cfg, phi_at, nullptr);
    THSpace space(adapted.mesh);
    Eigen::VectorXd phi = adapted.phi;

    GradientCheckReport report;
    report.seed = cfg.seed;
    report.deltas = deltas;

    // zero-mean direction
    Eigen::VectorXd zeta;
    if (direction) {
        zeta = *direction;
    } else {
        std::mt19937 rng(cfg.seed);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        zeta.resize(space.n1());
        for (int i = 0; i < zeta.size(); ++i) zeta[i] = dist(rng);
    }
    double area = adapted.mesh.total_area();
    zeta.array() -= integrate_p1(adapted.mesh, zeta) / area;

    auto objective = [&](const Eigen::VectorXd& ph, const StateFields* warm) {
        StateFields st;
        if (!gl_only) {
            st = solve_state_robust(space, ph, mat, cfg.model.mu, f, g, {}, warm);
        } else {
            st.u = Eigen::VectorXd::Zero(space.p2v.n_dofs);
            st.p = Eigen::VectorXd::Zero(space.n1());
        }
        ForceFunctional fn = functional;
        if (gl_only) fn.kind = FunctionalKind::GinzburgLandauOnly;
        ObjectiveValue obj = eval_objective(space, ph, st, fn, mat, cfg.model.mu, cfg.model.eps,
                                            cfg.model.gamma, cfg.model.fold_c0);
        return std::make_pair(obj.total(), st);
    };

    auto [j0, state] = objective(phi, nullptr);
    (void)j0;

    Eigen::VectorXd grad;
    if (gl_only) {
        StateFields empty;
        AdjointFields no_adj;
        FunctionalLinearization no_lin;
        grad = assemble_reduced_gradient(space, phi, empty, no_adj, no_lin, mat, cfg.model.eps,
                                         cfg.model.gamma, cfg.model.fold_c0);
        report.uniqueness_margin = 0.0;
    } else {
        report.uniqueness_margin = uniqueness_margin(space, state, cfg.model.mu);
        FunctionalLinearization lin =
            linearize_functional(space, functional, state, phi, mat, cfg.model.mu);
        AdjointFields adj = solve_adjoint(space, phi, state, lin, mat, cfg.model.mu, g);
        grad = assemble_reduced_gradient(space, phi, state, adj, lin, mat, cfg.model.eps,
                                         cfg.model.gamma, cfg.model.fold_c0);
    }
    report.analytic = grad.dot(zeta);

    for (double d : deltas) {
        double jp = objective(phi + d * zeta, &state).first;
        double jm = objective(phi - d * zeta, &state).first;
        double fd = (jp - jm) / (2.0 * d);
        report.fd_values.push_back(fd);
        double denom = std::max({std::abs(report.analytic), std::abs(fd), 1e-300});
        report.rel_errors.push_back(std::abs(fd - report.analytic) / denom);
    }
    return report;
}

Trajectory run_optimization(const RunConfig& cfg) {
    cfg.validate();
    Material mat = material_from(cfg);
    ForceFunctional functional = functional_from(cfg);
    InflowProfile g = inflow_from(cfg);
    BodyForce f = force_from(cfg);
    JphiForm jform =
        cfg.functional.jphi_form == "divform" ? JphiForm::DivForm : JphiForm::Rewritten;
    StressSampling sampling = cfg.functional.surface_sampling == "averaged"
                                  ? StressSampling::NodalAveraged
                                  : StressSampling::Containing;

    const TriMesh coarse = generate_rect_mesh(cfg.width, cfg.height, cfg.mesh.h0);

    // initial mesh + phase field
    auto phi0_at = [&](const Eigen::Vector2d& x) {
        return circle_phase(x, cfg.obstacle.center, cfg.obstacle.radius, cfg.model.eps);
    };
    TriMesh mesh;
    Eigen::VectorXd phi;
    if (cfg.obstacle.shape == "circle") {
        AdaptResult a = adapt_mesh(coarse, cfg, phi0_at, nullptr);
        mesh = std::move(a.mesh);
        phi = std::move(a.phi);
    } else {
        mesh = coarse;
        phi = initial_phase_field(mesh, cfg);
    }

    auto space = std::make_unique<THSpace>(mesh);
    const double area = mesh.total_area();
    const double mass_target = integrate_p1(mesh, phi);

    auto mu_schedule = cfg.resolved_mu_schedule();
    auto gamma_schedule = cfg.resolved_gamma_schedule();
    auto schedule_value = [](const std::vector<ScheduleStage>& stages, int step) {
        int consumed = 0;
        for (size_t i = 0; i + 1 < stages.size(); ++i) {
            consumed += stages[i].steps;
            if (step < consumed) return stages[i].value;
        }
        return stages.back().value;
    };

    Trajectory traj;
    Eigen::VectorXd w;  // chemical potential of the previous step
    StateFields state;
    bool have_state = false;
    double mu = schedule_value(mu_schedule, 0);

    auto log_state = [&](int step, double tau, double mu_k, double gamma_k,
                         const StateFields& st, const AdjointFields& adj, int it_state,
                         int it_ch, double mass_delta) {
        LogRow row;
        row.step = step;
        row.tau = tau;
        row.mu = mu_k;
        row.gamma = gamma_k;
        ObjectiveValue obj = eval_objective(*space, phi, st, functional, mat, mu_k, cfg.model.eps,
                                            gamma_k, cfg.model.fold_c0);
        row.j_total = obj.total();
        row.j_porous = obj.porous;
        row.j_gl = obj.gl_grad + obj.gl_pot;
        row.j_force = obj.force;
        row.fd_vol = eval_force_volume(*space, phi, st, functional.drag_dir, mat, mu_k);
        row.fl_vol = eval_force_volume(*space, phi, st, functional.lift_dir, mat, mu_k);
        try {
            row.fd_surf = eval_force_surface(*space, phi, st, functional.drag_dir, mu_k, sampling);
        } catch (const std::runtime_error&) {
            row.fd_surf = std::numeric_limits<double>::quiet_NaN();
        }
        row.ratio = row.fd_vol != 0.0 ? row.fl_vol / row.fd_vol
                                      : std::numeric_limits<double>::quiet_NaN();
        row.mass_err = std::abs(integrate_p1(*space->mesh, phi) - mass_target) / area;
        try {
            row.com = com_y(*space->mesh, phi);
        } catch (const std::runtime_error&) {
            row.com = std::numeric_limits<double>::quiet_NaN();
        }
        row.step_mass_delta = mass_delta;
        row.newton_iters_state = it_state;
        row.newton_iters_ch = it_ch;
        traj.rows.push_back(row);
        (void)adj;
    };

    AdjointFields adjoint;
    int step = 0;
    for (; step < cfg.stepping.max_steps; ++step) {
        mu = schedule_value(mu_schedule, step);
        double gamma = schedule_value(gamma_schedule, step);

        // cadence-based re-mesh (coarsening + refinement against current fields)
        if (cfg.mesh.adapt_every > 0 && step > 0 && step % cfg.mesh.adapt_every == 0) {
            P1Transfer phi_src(*space->mesh, phi);
            P1Transfer w_src(*space->mesh, w);
            std::function<double(const Eigen::Vector2d&)> phi_at =
                [&](const Eigen::Vector2d& x) { return phi_src(x); };
            std::function<double(const Eigen::Vector2d&)> w_at =
                [&](const Eigen::Vector2d& x) { return w_src(x); };
            AdaptResult a = adapt_mesh(coarse, cfg, phi_at, &w_at);
            mesh = std::move(a.mesh);
            phi = std::move(a.phi);
            w = std::move(a.w);
            space = std::make_unique<THSpace>(mesh);
            // interpolation is not conservative; restore the mass exactly
            phi.array() += (mass_target - integrate_p1(mesh, phi)) / area;
            have_state = false;
        }

        // primal solve (alpha frozen at phi^k)
        int it_state = 0;
        state = solve_state_robust(*space, phi, mat, mu, f, g, {},
                                   have_state ? &state : nullptr);
        have_state = true;

        FunctionalLinearization lin =
            linearize_functional(*space, functional, state, phi, mat, mu);
        adjoint = solve_adjoint(*space, phi, state, lin, mat, mu, g);
        JphiLoad jphi = assemble_Jphi(*space, jform, phi, state, mat, lin, f);

        if (w.size() != space->n1())
            w = chemical_potential(*space, phi, &state, &adjoint, jphi, mat, cfg.model.eps,
                                   gamma, cfg.model.fold_c0);

        double tau = adaptive_tau(*space->mesh, w, cfg.stepping.xi, cfg.stepping.tau_max);

        ChStepSettings chs;
        chs.com_constraint = cfg.constraints.com_y && functional.kind == FunctionalKind::Ratio;
        ChStepResult result;
        bool accepted = false;
        for (int attempt = 0; attempt <= 6; ++attempt) {
            try {
                result = ch_step(*space, phi, &state, &adjoint, jphi, mat, cfg.model.eps, gamma,
                                 cfg.model.fold_c0, tau, chs);
                accepted = true;
                break;
            } catch (const NewtonError&) {
                if (attempt == 6) throw;
                tau *= 0.5;
            }
        }
        if (!accepted) break;

        double mass_delta =
            std::abs(integrate_p1(*space->mesh, result.phi) - integrate_p1(*space->mesh, phi)) /
            area;

        log_state(step, tau, mu, gamma, state, adjoint, it_state, result.newton_iters,
                  mass_delta);

        if (cfg.output.vtk_every > 0 && step % cfg.output.vtk_every == 0) {
            Snapshot snap;
            snap.step = step;
            snap.mesh = *space->mesh;
            snap.phi = phi;
            snap.w = w;
            snap.p = state.p;
            snap.pi = adjoint.pi;
            snap.u = state.u;
            snap.q = adjoint.q;
            traj.snapshots.push_back(std::move(snap));
        }

        // stagnation: ||phi^{k+1} - phi^k||_{L2} / tau
        SparseSystem mass = assemble(*space->mesh, FormKind::Mass);
        Eigen::VectorXd d = result.phi - phi;
        double rate = std::sqrt(std::max(0.0, d.dot(mass.A * d))) / tau;

        phi = std::move(result.phi);
        w = std::move(result.w);

        if (rate < cfg.stepping.stagnation_tol) {
            traj.stop_reason = "stagnation";
            ++step;
            break;
        }
    }
    if (traj.stop_reason.empty())
        traj.stop_reason = step >= cfg.stepping.max_steps ? "max_steps" : "aborted";

    // final evaluation row
    mu = schedule_value(mu_schedule, std::max(0, step - 1));
    double gamma = schedule_value(gamma_schedule, std::max(0, step - 1));
    state = solve_state_robust(*space, phi, mat, mu, f, g, {}, have_state ? &state : nullptr);
    FunctionalLinearization lin = linearize_functional(*space, functional, state, phi, mat, mu);
    adjoint = solve_adjoint(*space, phi, state, lin, mat, mu, g);
    log_state(step, 0.0, mu, gamma, state, adjoint, 0, 0, 0.0);

    traj.final_mesh = *space->mesh;
    traj.final_phi = phi;
    traj.final_w = w;
    traj.final_state = state;
    traj.final_adjoint = adjoint;
    return traj;
}

Eigen::VectorXd read_phi_file_impl(const std::string& path, int n) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open phase-field file '" + path + "'");
    Eigen::VectorXd phi(n);
    for (int i = 0; i < n; ++i)
        if (!(in >> phi[i]))
            throw std::runtime_error("phase-field file '" + path + "': expected " +
                                     std::to_string(n) + " values");
    return phi;
}

}  // namespace pfopt
