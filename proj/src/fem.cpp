#include "pfopt/fem.hpp"

#include <Eigen/SparseLU>

#include <cmath>

namespace pfopt {

namespace {

QuadratureRule make_rule(int degree) {
    QuadratureRule r;
    r.degree = degree;
    auto push3 = [&](double a, double w) {
        // the three permutations of (a, a, 1-2a)
        double b = 1.0 - 2.0 * a;
        r.points.push_back({b, a, a});
        r.points.push_back({a, b, a});
        r.points.push_back({a, a, b});
        r.weights.insert(r.weights.end(), 3, w);
    };
    auto push6 = [&](double a, double b, double w) {
        double c = 1.0 - a - b;
        r.points.push_back({a, b, c});
        r.points.push_back({a, c, b});
        r.points.push_back({b, a, c});
        r.points.push_back({b, c, a});
        r.points.push_back({c, a, b});
        r.points.push_back({c, b, a});
        r.weights.insert(r.weights.end(), 6, w);
    };
    switch (degree) {
        case 1:
            r.points.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
            r.weights.push_back(0.5);
            break;
        case 2:
            push3(1.0 / 6.0, 1.0 / 6.0);
            break;
        case 4:
            // Dunavant degree 4, 6 points
            push3(0.445948490915965, 0.223381589678011 / 2.0);
            push3(0.091576213509771, 0.109951743655322 / 2.0);
            break;
        case 6:
            // Dunavant degree 6, 12 points
            push3(0.063089014491502, 0.050844906370207 / 2.0);
            push3(0.249286745170910, 0.116786275726379 / 2.0);
            push6(0.310352451033785, 0.053145049844816, 0.082851075618374 / 2.0);
            break;
        default:
            throw std::invalid_argument("quadrature_rule: unsupported degree");
    }
    return r;
}

}  // namespace

const QuadratureRule& quadrature_rule(int degree) {
    static const QuadratureRule r1 = make_rule(1);
    static const QuadratureRule r2 = make_rule(2);
    static const QuadratureRule r4 = make_rule(4);
    static const QuadratureRule r6 = make_rule(6);
    switch (degree) {
        case 1: return r1;
        case 2: return r2;
        case 4: return r4;
        case 6: return r6;
        default: throw std::invalid_argument("quadrature_rule: unsupported degree");
    }
}

void p2_shape(const std::array<double, 3>& l, double N[6]) {
    N[0] = l[0] * (2 * l[0] - 1);
    N[1] = l[1] * (2 * l[1] - 1);
    N[2] = l[2] * (2 * l[2] - 1);
    N[3] = 4 * l[0] * l[1];
    N[4] = 4 * l[1] * l[2];
    N[5] = 4 * l[2] * l[0];
}

void p2_shape_grad_ref(const std::array<double, 3>& l, double dN[6][2]) {
    // reference coordinates (xi, eta): l = (1-xi-eta, xi, eta)
    const double dl[3][2] = {{-1, -1}, {1, 0}, {0, 1}};
    for (int i = 0; i < 3; ++i) {
        dN[i][0] = (4 * l[i] - 1) * dl[i][0];
        dN[i][1] = (4 * l[i] - 1) * dl[i][1];
    }
    const int ea[3] = {0, 1, 2}, eb[3] = {1, 2, 0};
    for (int e = 0; e < 3; ++e) {
        dN[3 + e][0] = 4 * (dl[ea[e]][0] * l[eb[e]] + l[ea[e]] * dl[eb[e]][0]);
        dN[3 + e][1] = 4 * (dl[ea[e]][1] * l[eb[e]] + l[ea[e]] * dl[eb[e]][1]);
    }
}

DofMap DofMap::p1(const TriMesh& mesh) {
    DofMap d;
    d.kind = ElementKind::P1;
    d.n_nodes = d.n_dofs = mesh.n_vertices();
    d.dofs_per_cell = 3;
    d.cell_dofs.reserve(3 * mesh.n_triangles());
    for (const auto& tri : mesh.triangles)
        for (int k = 0; k < 3; ++k) d.cell_dofs.push_back(tri[k]);
    return d;
}

DofMap DofMap::p2_scalar(const TriMesh& mesh) {
    DofMap d;
    d.kind = ElementKind::P2Scalar;
    d.dofs_per_cell = 6;
    std::map<std::array<int, 2>, int> edge_id;
    auto edge_node = [&](int a, int b) {
        auto key = a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a};
        auto it = edge_id.find(key);
        if (it != edge_id.end()) return it->second;
        int id = mesh.n_vertices() + static_cast<int>(edge_id.size());
        edge_id.emplace(key, id);
        return id;
    };
    d.cell_dofs.reserve(6 * mesh.n_triangles());
    for (const auto& tri : mesh.triangles) {
        for (int k = 0; k < 3; ++k) d.cell_dofs.push_back(tri[k]);
        d.cell_dofs.push_back(edge_node(tri[0], tri[1]));
        d.cell_dofs.push_back(edge_node(tri[1], tri[2]));
        d.cell_dofs.push_back(edge_node(tri[2], tri[0]));
    }
    d.n_nodes = d.n_dofs = mesh.n_vertices() + static_cast<int>(edge_id.size());
    return d;
}

DofMap DofMap::p2_vector(const TriMesh& mesh) {
    DofMap scalar = p2_scalar(mesh);
    DofMap d;
    d.kind = ElementKind::P2Vector;
    d.n_nodes = scalar.n_nodes;
    d.n_dofs = 2 * scalar.n_nodes;
    d.dofs_per_cell = 12;
    d.cell_dofs.reserve(12 * mesh.n_triangles());
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const int* sc = scalar.cell(t);
        for (int k = 0; k < 6; ++k) {
            d.cell_dofs.push_back(2 * sc[k]);
            d.cell_dofs.push_back(2 * sc[k] + 1);
        }
    }
    return d;
}

namespace {

struct CellGeometry {
    Eigen::Matrix2d jac;      // [x1-x0, x2-x0]
    Eigen::Matrix2d jac_inv_t;
    double det;               // 2 * area
};

CellGeometry cell_geometry(const TriMesh& mesh, int t) {
    const auto& tri = mesh.triangles[t];
    CellGeometry g;
    g.jac.col(0) = mesh.vertices[tri[1]] - mesh.vertices[tri[0]];
    g.jac.col(1) = mesh.vertices[tri[2]] - mesh.vertices[tri[0]];
    g.det = g.jac.determinant();
    g.jac_inv_t = g.jac.inverse().transpose();
    return g;
}

using Triplets = std::vector<Eigen::Triplet<double>>;

void scalar_mass_or_stiffness(const TriMesh& mesh, const DofMap& dof, bool stiffness,
                              const Eigen::VectorXd* weight, Triplets& trip) {
    const QuadratureRule& qr = quadrature_rule(4);
    const bool is_p2 = dof.kind == ElementKind::P2Scalar;
    const int n = dof.dofs_per_cell;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        CellGeometry g = cell_geometry(mesh, t);
        const int* cd = dof.cell(t);
        const auto& tri = mesh.triangles[t];
        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            double w = qr.weights[q] * g.det;
            double N[6];
            double dN[6][2];
            Eigen::Vector2d grad[6];
            if (is_p2) {
                p2_shape(l, N);
                p2_shape_grad_ref(l, dN);
                for (int i = 0; i < 6; ++i)
                    grad[i] = g.jac_inv_t * Eigen::Vector2d(dN[i][0], dN[i][1]);
            } else {
                for (int i = 0; i < 3; ++i) {
                    N[i] = l[i];
                    grad[i] = mesh.p1_basis_grad(t, i);
                }
            }
            double c = 1.0;
            if (weight) {
                c = l[0] * (*weight)[tri[0]] + l[1] * (*weight)[tri[1]] + l[2] * (*weight)[tri[2]];
            }
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    double v = stiffness ? grad[i].dot(grad[j]) : c * N[i] * N[j];
                    trip.emplace_back(cd[i], cd[j], w * v);
                }
        }
    }
}

}  // namespace

SparseSystem assemble(const TriMesh& mesh, FormKind form, const FormCoefficients& coeff) {
    Triplets trip;
    const QuadratureRule& qr = quadrature_rule(4);
    SparseSystem sys;

    switch (form) {
        case FormKind::Mass:
        case FormKind::Stiffness:
        case FormKind::WeightedMass: {
            if (form == FormKind::WeightedMass && !coeff.scalar_p1)
                throw std::invalid_argument("assemble: WeightedMass needs a P1 coefficient");
            DofMap dof = coeff.space == ElementKind::P2Scalar ? DofMap::p2_scalar(mesh)
                                                              : DofMap::p1(mesh);
            if (coeff.space == ElementKind::P2Vector)
                throw std::invalid_argument("assemble: use SymGradStiffness/DivCoupling for vectors");
            if (form == FormKind::WeightedMass &&
                coeff.scalar_p1->size() != mesh.n_vertices())
                throw std::invalid_argument("assemble: coefficient size mismatch");
            scalar_mass_or_stiffness(mesh, dof, form == FormKind::Stiffness,
                                     form == FormKind::WeightedMass ? coeff.scalar_p1 : nullptr,
                                     trip);
            sys.A.resize(dof.n_dofs, dof.n_dofs);
            break;
        }
        case FormKind::SymGradStiffness: {
            DofMap dof = DofMap::p2_vector(mesh);
            for (int t = 0; t < mesh.n_triangles(); ++t) {
                CellGeometry g = cell_geometry(mesh, t);
                const int* cd = dof.cell(t);
                for (size_t q = 0; q < qr.points.size(); ++q) {
                    double w = qr.weights[q] * g.det;
                    double dN[6][2];
                    p2_shape_grad_ref(qr.points[q], dN);
                    Eigen::Vector2d grad[6];
                    for (int i = 0; i < 6; ++i)
                        grad[i] = g.jac_inv_t * Eigen::Vector2d(dN[i][0], dN[i][1]);
                    // trial dof (node j, comp cj), test (node i, comp ci):
                    // integrand (d_a u_b + d_b u_a) d_a v_b
                    for (int i = 0; i < 6; ++i)
                        for (int ci = 0; ci < 2; ++ci)
                            for (int j = 0; j < 6; ++j)
                                for (int cj = 0; cj < 2; ++cj) {
                                    double v = (ci == cj) ? grad[i].dot(grad[j]) : 0.0;
                                    v += grad[i][cj] * grad[j][ci];
                                    trip.emplace_back(cd[2 * i + ci], cd[2 * j + cj], w * v);
                                }
                }
            }
            sys.A.resize(dof.n_dofs, dof.n_dofs);
            break;
        }
        case FormKind::DivCoupling: {
            DofMap p1 = DofMap::p1(mesh);
            DofMap p2v = DofMap::p2_vector(mesh);
            for (int t = 0; t < mesh.n_triangles(); ++t) {
                CellGeometry g = cell_geometry(mesh, t);
                const int* rd = p1.cell(t);
                const int* cdv = p2v.cell(t);
                for (size_t q = 0; q < qr.points.size(); ++q) {
                    const auto& l = qr.points[q];
                    double w = qr.weights[q] * g.det;
                    double dN[6][2];
                    p2_shape_grad_ref(l, dN);
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 6; ++j)
                            for (int cj = 0; cj < 2; ++cj) {
                                Eigen::Vector2d gj =
                                    g.jac_inv_t * Eigen::Vector2d(dN[j][0], dN[j][1]);
                                trip.emplace_back(rd[i], cdv[2 * j + cj], w * l[i] * gj[cj]);
                            }
                }
            }
            sys.A.resize(p1.n_dofs, p2v.n_dofs);
            break;
        }
        case FormKind::ConvectionUGradV:
        case FormKind::ConvectionVGradU: {
            if (!coeff.velocity_p2)
                throw std::invalid_argument("assemble: convection needs the advecting field");
            DofMap p2v = DofMap::p2_vector(mesh);
            if (coeff.velocity_p2->size() != p2v.n_dofs)
                throw std::invalid_argument("assemble: advecting field size mismatch");
            const Eigen::VectorXd& wfield = *coeff.velocity_p2;
            for (int t = 0; t < mesh.n_triangles(); ++t) {
                CellGeometry g = cell_geometry(mesh, t);
                const int* cd = p2v.cell(t);
                for (size_t q = 0; q < qr.points.size(); ++q) {
                    const auto& l = qr.points[q];
                    double w = qr.weights[q] * g.det;
                    double N[6];
                    double dN[6][2];
                    p2_shape(l, N);
                    p2_shape_grad_ref(l, dN);
                    Eigen::Vector2d grad[6];
                    for (int i = 0; i < 6; ++i)
                        grad[i] = g.jac_inv_t * Eigen::Vector2d(dN[i][0], dN[i][1]);
                    Eigen::Vector2d wq = Eigen::Vector2d::Zero();
                    Eigen::Matrix2d gw = Eigen::Matrix2d::Zero();  // (a,b) = d_a w_b
                    for (int k = 0; k < 6; ++k) {
                        Eigen::Vector2d wk(wfield[cd[2 * k]], wfield[cd[2 * k + 1]]);
                        wq += N[k] * wk;
                        gw += grad[k] * wk.transpose();
                    }
                    if (form == FormKind::ConvectionUGradV) {
                        // ((w . grad) du) . v : entry ((i,c),(j,c)) = N_i (w . grad N_j)
                        for (int i = 0; i < 6; ++i)
                            for (int j = 0; j < 6; ++j) {
                                double v = N[i] * wq.dot(grad[j]);
                                for (int c = 0; c < 2; ++c)
                                    trip.emplace_back(cd[2 * i + c], cd[2 * j + c], w * v);
                            }
                    } else {
                        // ((du . grad) w) . v : entry ((i,ci),(j,cj)) = N_i N_j d_cj w_ci
                        for (int i = 0; i < 6; ++i)
                            for (int ci = 0; ci < 2; ++ci)
                                for (int j = 0; j < 6; ++j)
                                    for (int cj = 0; cj < 2; ++cj)
                                        trip.emplace_back(cd[2 * i + ci], cd[2 * j + cj],
                                                          w * N[i] * N[j] * gw(cj, ci));
                    }
                }
            }
            sys.A.resize(p2v.n_dofs, p2v.n_dofs);
            break;
        }
        default:
            throw std::invalid_argument("assemble: unknown form descriptor");
    }

    sys.A.setFromTriplets(trip.begin(), trip.end());
    sys.A.makeCompressed();
    sys.rhs = Eigen::VectorXd::Zero(sys.A.rows());
    return sys;
}

double trilinear_b(const TriMesh& mesh, const DofMap& p2v, const Eigen::VectorXd& u,
                   const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
    if (u.size() != p2v.n_dofs || v.size() != p2v.n_dofs || w.size() != p2v.n_dofs)
        throw std::invalid_argument("trilinear_b: field size mismatch");
    const QuadratureRule& qr = quadrature_rule(4);
    double total = 0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        CellGeometry g = cell_geometry(mesh, t);
        const int* cd = p2v.cell(t);
        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            double N[6];
            double dN[6][2];
            p2_shape(l, N);
            p2_shape_grad_ref(l, dN);
            Eigen::Vector2d uq = Eigen::Vector2d::Zero(), wq = Eigen::Vector2d::Zero();
            Eigen::Matrix2d gv = Eigen::Matrix2d::Zero();
            for (int k = 0; k < 6; ++k) {
                Eigen::Vector2d gk = g.jac_inv_t * Eigen::Vector2d(dN[k][0], dN[k][1]);
                uq += N[k] * Eigen::Vector2d(u[cd[2 * k]], u[cd[2 * k + 1]]);
                wq += N[k] * Eigen::Vector2d(w[cd[2 * k]], w[cd[2 * k + 1]]);
                gv += gk * Eigen::Vector2d(v[cd[2 * k]], v[cd[2 * k + 1]]).transpose();
            }
            // (u . grad) v . w = u_a d_a v_b w_b
            total += qr.weights[q] * g.det * (uq.transpose() * gv * wq)(0, 0);
        }
    }
    return total;
}

double k_omega(double domain_measure, int d) {
    if (domain_measure <= 0) throw std::invalid_argument("k_omega: measure must be positive");
    if (d == 2) return 0.5 * std::sqrt(domain_measure);
    if (d == 3) return (2.0 * std::sqrt(2.0) / 3.0) * std::pow(domain_measure, 1.0 / 6.0);
    throw std::invalid_argument("k_omega: dimension must be 2 or 3");
}

Eigen::VectorXd solve_sparse(const Eigen::SparseMatrix<double, Eigen::RowMajor>& A,
                             const Eigen::VectorXd& rhs, double tol) {
    Eigen::SparseMatrix<double> Ac = A;  // SparseLU wants column-major
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(Ac);
    lu.factorize(Ac);
    if (lu.info() != Eigen::Success)
        throw SolveFailure("solve_sparse: factorization failed (singular matrix?)",
                           std::numeric_limits<double>::infinity());
    Eigen::VectorXd x = lu.solve(rhs);
    double rhs_norm = rhs.norm();
    double res = (A * x - rhs).norm();
    if (!(res <= tol * std::max(rhs_norm, 1e-300)) && rhs_norm > 0)
        throw SolveFailure("solve_sparse: residual above tolerance", res / rhs_norm);
    if (!x.allFinite())
        throw SolveFailure("solve_sparse: non-finite solution", std::numeric_limits<double>::infinity());
    return x;
}

Eigen::VectorXd solve_sparse(const SparseSystem& system, double tol) {
    return solve_sparse(system.A, system.rhs, tol);
}

double integrate(const TriMesh& mesh, const std::function<double(const Eigen::Vector2d&)>& f,
                 int degree) {
    const QuadratureRule& qr = quadrature_rule(degree);
    double total = 0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        double det = 2.0 * mesh.signed_area(t);
        for (size_t q = 0; q < qr.points.size(); ++q) {
            const auto& l = qr.points[q];
            Eigen::Vector2d x = l[0] * mesh.vertices[tri[0]] + l[1] * mesh.vertices[tri[1]] +
                                l[2] * mesh.vertices[tri[2]];
            total += qr.weights[q] * det * f(x);
        }
    }
    return total;
}

double integrate_p1(const TriMesh& mesh, const Eigen::VectorXd& field) {
    if (field.size() != mesh.n_vertices())
        throw std::invalid_argument("integrate_p1: size mismatch");
    double total = 0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        total += mesh.signed_area(t) * (field[tri[0]] + field[tri[1]] + field[tri[2]]) / 3.0;
    }
    return total;
}

double integrate_grad_sq_p1(const TriMesh& mesh, const Eigen::VectorXd& field) {
    double total = 0;
    for (int t = 0; t < mesh.n_triangles(); ++t)
        total += mesh.signed_area(t) * mesh.p1_gradient(t, field).squaredNorm();
    return total;
}

THSpace::THSpace(const TriMesh& m)
    : mesh(&m), p1(DofMap::p1(m)), p2(DofMap::p2_scalar(m)), p2v(DofMap::p2_vector(m)) {
    p2_coords.assign(p2.n_nodes, Eigen::Vector2d::Zero());
    p2_node_on_boundary.assign(p2.n_nodes, 0);
    p2_node_marker.assign(p2.n_nodes, BoundaryMarker::Left);
    p1_node_on_boundary.assign(m.n_vertices(), 0);

    for (int v = 0; v < m.n_vertices(); ++v) p2_coords[v] = m.vertices[v];
    for (int t = 0; t < m.n_triangles(); ++t) {
        const int* cd = p2.cell(t);
        const auto& tri = m.triangles[t];
        for (int e = 0; e < 3; ++e) {
            int a = tri[e], b = tri[(e + 1) % 3];
            p2_coords[cd[3 + e]] = 0.5 * (m.vertices[a] + m.vertices[b]);
            auto key = a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a};
            edge_p2_node.emplace(key, cd[3 + e]);
        }
    }
    for (const auto& [edge, marker] : m.boundary_edges) {
        for (int v : edge) {
            p1_node_on_boundary[v] = 1;
            p2_node_on_boundary[v] = 1;
            p2_node_marker[v] = marker;
        }
    }
    // boundary edge midpoints
    for (int t = 0; t < m.n_triangles(); ++t) {
        const int* cd = p2.cell(t);
        const auto& tri = m.triangles[t];
        for (int e = 0; e < 3; ++e) {
            int a = tri[e], b = tri[(e + 1) % 3];
            auto key = a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a};
            auto it = m.boundary_edges.find(key);
            if (it != m.boundary_edges.end()) {
                p2_node_on_boundary[cd[3 + e]] = 1;
                p2_node_marker[cd[3 + e]] = it->second;
            }
        }
    }
}

Eigen::Vector2d THSpace::p2v_value(int t, const std::array<double, 3>& bary,
                                   const Eigen::VectorXd& u) const {
    double N[6];
    p2_shape(bary, N);
    const int* cd = p2v.cell(t);
    Eigen::Vector2d val = Eigen::Vector2d::Zero();
    for (int k = 0; k < 6; ++k) val += N[k] * Eigen::Vector2d(u[cd[2 * k]], u[cd[2 * k + 1]]);
    return val;
}

Eigen::Matrix2d THSpace::p2v_gradient(int t, const std::array<double, 3>& bary,
                                      const Eigen::VectorXd& u) const {
    double dN[6][2];
    p2_shape_grad_ref(bary, dN);
    const auto& tri = mesh->triangles[t];
    Eigen::Matrix2d jac;
    jac.col(0) = mesh->vertices[tri[1]] - mesh->vertices[tri[0]];
    jac.col(1) = mesh->vertices[tri[2]] - mesh->vertices[tri[0]];
    Eigen::Matrix2d jit = jac.inverse().transpose();
    const int* cd = p2v.cell(t);
    Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
    for (int k = 0; k < 6; ++k) {
        Eigen::Vector2d gk = jit * Eigen::Vector2d(dN[k][0], dN[k][1]);
        g += gk * Eigen::Vector2d(u[cd[2 * k]], u[cd[2 * k + 1]]).transpose();
    }
    return g;
}

double THSpace::p1_value(int t, const std::array<double, 3>& bary,
                         const Eigen::VectorXd& f) const {
    const auto& tri = mesh->triangles[t];
    return bary[0] * f[tri[0]] + bary[1] * f[tri[1]] + bary[2] * f[tri[2]];
}

double THSpace::grad_l2_norm(const Eigen::VectorXd& u) const {
    const QuadratureRule& qr = quadrature_rule(4);
    double total = 0;
    for (int t = 0; t < mesh->n_triangles(); ++t) {
        double det = 2.0 * mesh->signed_area(t);
        for (size_t q = 0; q < qr.points.size(); ++q)
            total += qr.weights[q] * det * p2v_gradient(t, qr.points[q], u).squaredNorm();
    }
    return std::sqrt(total);
}

Eigen::VectorXd THSpace::interpolate_p2v(
    const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& g) const {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(p2v.n_dofs);
    for (int n = 0; n < p2.n_nodes; ++n) {
        Eigen::Vector2d v = g(p2_coords[n]);
        u[2 * n] = v.x();
        u[2 * n + 1] = v.y();
    }
    return u;
}

}  // namespace pfopt
