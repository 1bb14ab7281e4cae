#pragma once

#include "pfopt/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

namespace pfopt {

/// Barycentric points and weights on the reference triangle.
/// Weights sum to the reference area 1/2; the rule is exact for polynomials
/// up to `degree`.
struct QuadratureRule {
    int degree;
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;
};

/// Catalog rules: degrees 1, 2, 4 (default for all forms) and 6 (error norms).
const QuadratureRule& quadrature_rule(int degree = 4);

enum class ElementKind { P1, P2Scalar, P2Vector };

/// Local-to-global dof tables. P2 dofs are vertices followed by edge midpoints;
/// vector dofs interleave components node-wise (2*node, 2*node+1).
class DofMap {
public:
    ElementKind kind;
    int n_dofs = 0;
    int n_nodes = 0;       // scalar nodes (P2Vector: n_dofs = 2*n_nodes)
    int dofs_per_cell = 0;
    std::vector<int> cell_dofs;  // flattened, dofs_per_cell per triangle

    static DofMap p1(const TriMesh& mesh);
    static DofMap p2_scalar(const TriMesh& mesh);
    static DofMap p2_vector(const TriMesh& mesh);

    const int* cell(int t) const { return cell_dofs.data() + t * dofs_per_cell; }
};

/// Shape values/gradients of the six P2 basis functions at a barycentric point.
void p2_shape(const std::array<double, 3>& bary, double N[6]);
void p2_shape_grad_ref(const std::array<double, 3>& bary, double dN[6][2]);

struct SparseSystem {
    Eigen::SparseMatrix<double, Eigen::RowMajor> A;
    Eigen::VectorXd rhs;
};

enum class FormKind {
    Mass,              // (u, v)
    Stiffness,         // (grad u, grad v)
    WeightedMass,      // (c u, v), P1 coefficient c
    SymGradStiffness,  // (grad u + grad u^T, grad v), P2 vector
    DivCoupling,       // (s, div u), P1 test x P2 vector trial
    ConvectionUGradV,  // ((w . grad) du, v), advecting P2 field w
    ConvectionVGradU,  // ((du . grad) w, v)
};

struct FormCoefficients {
    const Eigen::VectorXd* scalar_p1 = nullptr;   // WeightedMass coefficient
    const Eigen::VectorXd* velocity_p2 = nullptr; // advecting field
    ElementKind space = ElementKind::P1;          // trial/test space for Mass etc.
};

/// Quadrature assembly of one catalog form. Rectangular forms (DivCoupling)
/// return a rows x cols matrix; all others are square on the given space.
SparseSystem assemble(const TriMesh& mesh, FormKind form, const FormCoefficients& coeff = {});

/// b(u,v,w) = integral of (u . grad) v . w for P2 vector fields.
double trilinear_b(const TriMesh& mesh, const DofMap& p2v, const Eigen::VectorXd& u,
                   const Eigen::VectorXd& v, const Eigen::VectorXd& w);

/// Continuity constant of the trilinear form: |Omega|^(1/2)/2 in 2D,
/// (2 sqrt 2 / 3)|Omega|^(1/6) in 3D.
double k_omega(double domain_measure, int d);

struct SolveFailure : std::runtime_error {
    double residual;
    explicit SolveFailure(const std::string& what, double res)
        : std::runtime_error(what), residual(res) {}
};

/// Sparse direct solve; checks the relative residual against tol.
Eigen::VectorXd solve_sparse(const SparseSystem& system, double tol = 1e-10);
Eigen::VectorXd solve_sparse(const Eigen::SparseMatrix<double, Eigen::RowMajor>& A,
                             const Eigen::VectorXd& rhs, double tol = 1e-10);

/// Quadrature integral of a pointwise expression x -> f(x).
double integrate(const TriMesh& mesh, const std::function<double(const Eigen::Vector2d&)>& f,
                 int degree = 4);

/// Integral of a P1 nodal field.
double integrate_p1(const TriMesh& mesh, const Eigen::VectorXd& field);

/// Integral of |grad field|^2 for a P1 nodal field.
double integrate_grad_sq_p1(const TriMesh& mesh, const Eigen::VectorXd& field);

/// Bundles the Taylor-Hood discretization of one mesh.
struct THSpace {
    const TriMesh* mesh = nullptr;
    DofMap p1;
    DofMap p2;   // scalar
    DofMap p2v;  // vector
    std::vector<Eigen::Vector2d> p2_coords;           // node coordinates
    std::vector<char> p2_node_on_boundary;            // mask
    std::vector<BoundaryMarker> p2_node_marker;       // valid where on boundary
    std::vector<char> p1_node_on_boundary;
    std::map<std::array<int, 2>, int> edge_p2_node;  // sorted vertex pair -> midpoint dof

    explicit THSpace(const TriMesh& m);

    int n1() const { return p1.n_dofs; }
    int n2() const { return p2.n_nodes; }

    /// Value/gradient of a P2 vector nodal field at a quadrature point of tri t.
    Eigen::Vector2d p2v_value(int t, const std::array<double, 3>& bary,
                              const Eigen::VectorXd& u) const;
    Eigen::Matrix2d p2v_gradient(int t, const std::array<double, 3>& bary,
                                 const Eigen::VectorXd& u) const;  // (i,j) = d_i u_j
    double p1_value(int t, const std::array<double, 3>& bary, const Eigen::VectorXd& f) const;

    /// L2 norm of the gradient of a P2 vector field.
    double grad_l2_norm(const Eigen::VectorXd& u) const;

    /// Interior P2 node values interpolating g on the boundary.
    Eigen::VectorXd interpolate_p2v(const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& g) const;
};

}  // namespace pfopt
