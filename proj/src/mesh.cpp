#include "pfopt/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace pfopt {

namespace {

std::array<int, 2> sorted_edge(int a, int b) {
    return a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a};
}

}  // namespace

std::string to_string(BoundaryMarker m) {
    switch (m) {
        case BoundaryMarker::Left: return "left";
        case BoundaryMarker::Right: return "right";
        case BoundaryMarker::Bottom: return "bottom";
        case BoundaryMarker::Top: return "top";
    }
    return "?";
}

void TriMesh::finalize() {
    neighbors.assign(triangles.size(), {-1, -1, -1});
    std::map<std::array<int, 2>, std::array<int, 2>> edge_use;  // edge -> (tri, local edge)
    for (int t = 0; t < n_triangles(); ++t) {
        const auto& tri = triangles[t];
        for (int k = 0; k < 3; ++k) {
            auto key = sorted_edge(tri[k], tri[(k + 1) % 3]);
            auto it = edge_use.find(key);
            if (it == edge_use.end()) {
                edge_use.emplace(key, std::array<int, 2>{t, k});
            } else {
                if (it->second[0] < 0)
                    throw std::runtime_error("non-conforming mesh: edge shared by >2 triangles");
                neighbors[t][k] = it->second[0];
                neighbors[it->second[0]][it->second[1]] = t;
                it->second[0] = -1;  // consumed
            }
        }
    }
}

double TriMesh::signed_area(int t) const {
    const auto& tri = triangles[t];
    const Eigen::Vector2d& a = vertices[tri[0]];
    const Eigen::Vector2d& b = vertices[tri[1]];
    const Eigen::Vector2d& c = vertices[tri[2]];
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

double TriMesh::diameter(int t) const {
    const auto& tri = triangles[t];
    double d = 0;
    for (int k = 0; k < 3; ++k)
        d = std::max(d, (vertices[tri[k]] - vertices[tri[(k + 1) % 3]]).norm());
    return d;
}

double TriMesh::total_area() const {
    double s = 0;
    for (int t = 0; t < n_triangles(); ++t) s += signed_area(t);
    return s;
}

Eigen::Vector2d TriMesh::centroid(int t) const {
    const auto& tri = triangles[t];
    return (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
}

bool TriMesh::is_boundary_edge(int a, int b) const {
    return boundary_edges.count(sorted_edge(a, b)) > 0;
}

Eigen::Vector2d TriMesh::p1_basis_grad(int t, int k) const {
    const auto& tri = triangles[t];
    const Eigen::Vector2d& p1 = vertices[tri[(k + 1) % 3]];
    const Eigen::Vector2d& p2 = vertices[tri[(k + 2) % 3]];
    // grad of hat function = rotated opposite edge / (2 area)
    Eigen::Vector2d e = p2 - p1;
    Eigen::Vector2d n(-e.y(), e.x());
    return n / (2.0 * signed_area(t));
}

Eigen::Vector2d TriMesh::p1_gradient(int t, const Eigen::VectorXd& field) const {
    const auto& tri = triangles[t];
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (int k = 0; k < 3; ++k) g += field[tri[k]] * p1_basis_grad(t, k);
    return g;
}

int TriMesh::locate(const Eigen::Vector2d& x) const {
    constexpr double tol = 1e-12;
    int best = -1;
    double best_violation = std::numeric_limits<double>::max();
    for (int t = 0; t < n_triangles(); ++t) {
        const auto& tri = triangles[t];
        const Eigen::Vector2d& a = vertices[tri[0]];
        const Eigen::Vector2d& b = vertices[tri[1]];
        const Eigen::Vector2d& c = vertices[tri[2]];
        double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
        double l1 = ((x.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (x.y() - a.y())) / det;
        double l2 = ((b.x() - a.x()) * (x.y() - a.y()) - (x.x() - a.x()) * (b.y() - a.y())) / det;
        double l0 = 1.0 - l1 - l2;
        double violation = -std::min({l0, l1, l2});
        if (violation <= tol) return t;
        best_violation = std::min(best_violation, violation);
        if (violation == best_violation) best = t;
    }
    return best;  // nearest fallback for points marginally outside
}

double TriMesh::p1_value_at(const Eigen::Vector2d& x, const Eigen::VectorXd& field) const {
    int t = locate(x);
    const auto& tri = triangles[t];
    const Eigen::Vector2d& a = vertices[tri[0]];
    const Eigen::Vector2d& b = vertices[tri[1]];
    const Eigen::Vector2d& c = vertices[tri[2]];
    double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    double l1 = ((x.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (x.y() - a.y())) / det;
    double l2 = ((b.x() - a.x()) * (x.y() - a.y()) - (x.x() - a.x()) * (b.y() - a.y())) / det;
    double l0 = 1.0 - l1 - l2;
    return l0 * field[tri[0]] + l1 * field[tri[1]] + l2 * field[tri[2]];
}

Eigen::VectorXd Prolongation::apply(const Eigen::VectorXd& f) const {
    if (f.size() != n_old) throw std::invalid_argument("prolongation: field size mismatch");
    Eigen::VectorXd out(n_old + static_cast<int>(midpoints.size()));
    out.head(n_old) = f;
    for (const auto& m : midpoints) out[m[0]] = 0.5 * (out[m[1]] + out[m[2]]);
    return out;
}

TriMesh generate_rect_mesh(double width, double height, double target_h) {
    if (width <= 0 || height <= 0 || target_h <= 0)
        throw std::invalid_argument("generate_rect_mesh: dimensions must be positive");

    const int nx = std::max(1, static_cast<int>(std::ceil(width / target_h)));
    const int ny = std::max(1, static_cast<int>(std::ceil(height / target_h)));
    const double hx = width / nx;
    const double hy = height / ny;

    TriMesh mesh;
    auto vid = [&](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            mesh.vertices.emplace_back(i * hx, j * hy);

    // cell centers
    const int c0 = static_cast<int>(mesh.vertices.size());
    auto cid = [&](int i, int j) { return c0 + j * nx + i; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            mesh.vertices.emplace_back((i + 0.5) * hx, (j + 0.5) * hy);

    // Four triangles per cell, each with its bisection edge on the cell side.
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            int sw = vid(i, j), se = vid(i + 1, j), ne = vid(i + 1, j + 1), nw = vid(i, j + 1);
            int c = cid(i, j);
            mesh.triangles.push_back({sw, se, c});  // bottom
            mesh.triangles.push_back({se, ne, c});  // right
            mesh.triangles.push_back({ne, nw, c});  // top
            mesh.triangles.push_back({nw, sw, c});  // left
        }
    }
    mesh.generation.assign(mesh.triangles.size(), 0);

    auto mark_edge = [&](int a, int b, BoundaryMarker m) {
        mesh.boundary_edges[a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a}] = m;
    };
    for (int i = 0; i < nx; ++i) {
        mark_edge(vid(i, 0), vid(i + 1, 0), BoundaryMarker::Bottom);
        mark_edge(vid(i, ny), vid(i + 1, ny), BoundaryMarker::Top);
    }
    for (int j = 0; j < ny; ++j) {
        mark_edge(vid(0, j), vid(0, j + 1), BoundaryMarker::Left);
        mark_edge(vid(nx, j), vid(nx, j + 1), BoundaryMarker::Right);
    }

    mesh.finalize();
    return mesh;
}

Eigen::VectorXd jump_indicator(const TriMesh& mesh, const Eigen::VectorXd& field) {
    if (field.size() != mesh.n_vertices())
        throw std::invalid_argument("jump_indicator: field size mismatch");

    Eigen::VectorXd eta2 = Eigen::VectorXd::Zero(mesh.n_triangles());
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        Eigen::Vector2d gt = mesh.p1_gradient(t, field);
        const auto& tri = mesh.triangles[t];
        for (int k = 0; k < 3; ++k) {
            int nb = mesh.neighbors[t][k];
            if (nb < 0) continue;  // boundary edge: no contribution
            Eigen::Vector2d e = mesh.vertices[tri[(k + 1) % 3]] - mesh.vertices[tri[k]];
            double len = e.norm();
            Eigen::Vector2d nu(-e.y() / len, e.x() / len);
            Eigen::Vector2d gn = mesh.p1_gradient(nb, field);
            double jump = (gt - gn).dot(nu);
            eta2[t] += len * jump * jump;
        }
    }
    return eta2.cwiseSqrt();
}

std::vector<int> dorfler_mark(const Eigen::VectorXd& indicator, double fraction) {
    if (indicator.size() == 0) throw std::invalid_argument("dorfler_mark: empty indicator");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("dorfler_mark: fraction must lie in (0,1]");

    std::vector<int> order(indicator.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (indicator[a] != indicator[b]) return indicator[a] > indicator[b];
        return a < b;
    });

    // Sum in greedy order so the threshold comparison is reproducible exactly.
    double total = 0;
    for (int idx : order) total += indicator[idx] * indicator[idx];
    const double goal = fraction * total;

    std::vector<int> marked;
    double acc = 0;
    for (int idx : order) {
        if (acc >= goal) break;
        marked.push_back(idx);
        acc += indicator[idx] * indicator[idx];
    }
    if (acc < goal && static_cast<int>(marked.size()) < indicator.size()) {
        // only reachable through roundoff; fall back to marking everything
        marked.resize(indicator.size());
        std::iota(marked.begin(), marked.end(), 0);
    }
    std::sort(marked.begin(), marked.end());
    return marked;
}

namespace {

// Mutable refinement state. Triangles are (a,b,c) with bisection edge (a,b);
// bisection replaces slot t by child (c,a,m) and appends child (b,c,m), so a
// slot index always refers to the original triangle or one of its descendants.
struct Refiner {
    TriMesh mesh;  // working copy, neighbor links maintained incrementally
    Prolongation prolongation;

    explicit Refiner(const TriMesh& m) : mesh(m) {
        prolongation.n_old = m.n_vertices();
        if (mesh.neighbors.empty()) mesh.finalize();
    }

    int new_midpoint(int a, int b) {
        int id = mesh.n_vertices();
        mesh.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
        prolongation.midpoints.push_back({id, a, b});
        auto key = sorted_edge(a, b);
        auto be = mesh.boundary_edges.find(key);
        if (be != mesh.boundary_edges.end()) {
            BoundaryMarker m = be->second;
            mesh.boundary_edges.erase(be);
            mesh.boundary_edges[sorted_edge(a, id)] = m;
            mesh.boundary_edges[sorted_edge(id, b)] = m;
        }
        return id;
    }

    int local_edge(int t, int x, int y) const {
        const auto& tri = mesh.triangles[t];
        for (int k = 0; k < 3; ++k) {
            int a = tri[k], b = tri[(k + 1) % 3];
            if ((a == x && b == y) || (a == y && b == x)) return k;
        }
        throw std::logic_error("local_edge: edge not in triangle");
    }

    void relink(int t, int x, int y, int target) {
        if (t >= 0) mesh.neighbors[t][local_edge(t, x, y)] = target;
    }

    // Newest-vertex bisection of t across its edge (a,b). If the neighbor's
    // bisection edge is a different edge, it is bisected first (recursive
    // closure); one level of recursion always restores compatibility.
    void bisect(int t) {
        const auto tri = mesh.triangles[t];
        const int a = tri[0], b = tri[1], c = tri[2];

        int nb = mesh.neighbors[t][0];
        if (nb >= 0) {
            const auto& ntri = mesh.triangles[nb];
            if (!(ntri[0] == b && ntri[1] == a)) {
                bisect(nb);
                nb = mesh.neighbors[t][0];
                const auto& ntri2 = mesh.triangles[nb];
                if (!(ntri2[0] == b && ntri2[1] == a))
                    throw std::logic_error("bisect: conformity closure failed");
            }
        }

        const int m = new_midpoint(a, b);

        // children of t
        const int gen = mesh.generation[t];
        const int nb_bc = mesh.neighbors[t][1];
        const int nb_ca = mesh.neighbors[t][2];
        const int t1 = t;                   // (c, a, m)
        const int t2 = mesh.n_triangles();  // (b, c, m)
        mesh.triangles[t1] = {c, a, m};
        mesh.triangles.push_back({b, c, m});
        mesh.generation[t1] = gen + 1;
        mesh.generation.push_back(gen + 1);
        mesh.neighbors.push_back({-1, -1, -1});
        mesh.neighbors[t1] = {nb_ca, -1, t2};  // edges (c,a) (a,m) (m,c)
        mesh.neighbors[t2] = {nb_bc, t1, -1};  // edges (b,c) (c,m) (m,b)
        relink(nb_bc, b, c, t2);               // edge (c,a) stays in slot t: no relink

        if (nb >= 0) {
            // neighbor is (b, a, d); split it with the same midpoint
            const auto ntri = mesh.triangles[nb];
            const int d = ntri[2];
            const int ngen = mesh.generation[nb];
            const int nb_ad = mesh.neighbors[nb][1];
            const int nb_db = mesh.neighbors[nb][2];
            const int n1 = nb;                  // (d, b, m)
            const int n2 = mesh.n_triangles();  // (a, d, m)
            mesh.triangles[n1] = {d, b, m};
            mesh.triangles.push_back({a, d, m});
            mesh.generation[n1] = ngen + 1;
            mesh.generation.push_back(ngen + 1);
            mesh.neighbors.push_back({-1, -1, -1});
            mesh.neighbors[n1] = {nb_db, t2, n2};  // edges (d,b) (b,m) (m,d)
            mesh.neighbors[n2] = {nb_ad, n1, t1};  // edges (a,d) (d,m) (m,a)
            relink(nb_ad, a, d, n2);
            mesh.neighbors[t1][1] = n2;  // (a,m)
            mesh.neighbors[t2][2] = n1;  // (m,b)
        }
    }
};

}  // namespace

RefineResult refine(const TriMesh& mesh, const std::vector<int>& marked) {
    for (int t : marked)
        if (t < 0 || t >= mesh.n_triangles())
            throw std::invalid_argument("refine: marked index out of range");

    Refiner r(mesh);
    for (int t : marked) {
        // Slot reuse makes this check valid: a raised generation means the marked
        // triangle was already split during some earlier closure.
        if (r.mesh.generation[t] > mesh.generation[t]) continue;
        r.bisect(t);
    }
    r.mesh.finalize();  // rebuild adjacency cleanly
    return {std::move(r.mesh), std::move(r.prolongation)};
}

}  // namespace pfopt
