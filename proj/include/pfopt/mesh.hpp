#pragma once

#include <Eigen/Dense>

#include <array>
#include <map>
#include <string>
#include <vector>

namespace pfopt {

enum class BoundaryMarker { Left, Right, Bottom, Top };

std::string to_string(BoundaryMarker m);

/// Conforming triangulation of a rectangle.
///
/// Triangles are stored positively oriented as (a, b, c) where the edge
/// (a, b) is the bisection edge used by newest-vertex refinement.
/// Meshes are immutable once finalize() has run; refine() returns a new mesh.
class TriMesh {
public:
    std::vector<Eigen::Vector2d> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> generation;                         // refinement level per triangle
    std::map<std::array<int, 2>, BoundaryMarker> boundary_edges;  // key: sorted vertex pair

    // Derived connectivity, built by finalize(). neighbors[t][k] is the triangle
    // sharing local edge k, edges numbered 0:(a,b) 1:(b,c) 2:(c,a); -1 on the boundary.
    std::vector<std::array<int, 3>> neighbors;

    void finalize();

    int n_vertices() const { return static_cast<int>(vertices.size()); }
    int n_triangles() const { return static_cast<int>(triangles.size()); }

    double signed_area(int t) const;
    double area(int t) const { return signed_area(t); }
    double diameter(int t) const;
    double total_area() const;

    Eigen::Vector2d centroid(int t) const;
    Eigen::Vector2d edge_midpoint(int a, int b) const { return 0.5 * (vertices[a] + vertices[b]); }

    bool is_boundary_edge(int a, int b) const;

    /// Gradient of the P1 hat function of local vertex k on triangle t.
    Eigen::Vector2d p1_basis_grad(int t, int k) const;

    /// Gradient of a P1 nodal field on triangle t (constant there).
    Eigen::Vector2d p1_gradient(int t, const Eigen::VectorXd& field) const;

    /// Locate the triangle containing point x (brute-force walk, test/transfer use).
    int locate(const Eigen::Vector2d& x) const;

    /// Evaluate a P1 nodal field at an arbitrary point.
    double p1_value_at(const Eigen::Vector2d& x, const Eigen::VectorXd& field) const;
};

/// Records how refine() created new vertices so nodal data can be prolonged.
struct Prolongation {
    int n_old = 0;
    // (new vertex, parent a, parent b): value = (f[a] + f[b]) / 2
    std::vector<std::array<int, 3>> midpoints;

    Eigen::VectorXd apply(const Eigen::VectorXd& f) const;
};

struct RefineResult {
    TriMesh mesh;
    Prolongation prolongation;
};

/// Structured criss-cross tessellation (4 triangles per cell); symmetric under
/// reflection across both axes, which the adjoint symmetry checks rely on.
TriMesh generate_rect_mesh(double width, double height, double target_h);

/// eta_T^2 = sum over edges of T of |e| * [normal derivative jump]^2.
/// Boundary edges contribute zero.
Eigen::VectorXd jump_indicator(const TriMesh& mesh, const Eigen::VectorXd& field);

/// Minimal set carrying `fraction` of the total squared indicator
/// (greedy by descending eta, ties by lower index).
std::vector<int> dorfler_mark(const Eigen::VectorXd& indicator, double fraction);

/// Newest-vertex bisection of the marked triangles with recursive conformity closure.
RefineResult refine(const TriMesh& mesh, const std::vector<int>& marked);

}  // namespace pfopt
