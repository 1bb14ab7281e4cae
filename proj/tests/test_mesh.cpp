#include <doctest.h>

#include "pfopt/mesh.hpp"

#include <map>
#include <random>
#include <set>

using namespace pfopt;

namespace {

// Independent conformity audit: every edge belongs to at most two triangles,
// boundary-marked edges to exactly one, orientation positive, and the area sum
// matches the bounding rectangle.
void audit_conforming(const TriMesh& mesh, double width, double height) {
    std::map<std::array<int, 2>, int> edge_count;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        CHECK(mesh.signed_area(t) > 0.0);
        const auto& tri = mesh.triangles[t];
        for (int k = 0; k < 3; ++k) {
            int a = tri[k], b = tri[(k + 1) % 3];
            auto key = a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a};
            ++edge_count[key];
        }
    }
    for (const auto& [edge, count] : edge_count) {
        CHECK(count <= 2);
        if (mesh.boundary_edges.count(edge))
            CHECK(count == 1);
        else
            CHECK(count == 2);
    }
    CHECK(mesh.total_area() == doctest::Approx(width * height).epsilon(1e-12));
}

}  // namespace

TEST_CASE("generate_rect_mesh basic properties") {
    TriMesh m = generate_rect_mesh(1.0, 1.0, 0.5);
    CHECK(m.n_triangles() >= 8);
    audit_conforming(m, 1.0, 1.0);

    TriMesh chan = generate_rect_mesh(1.7, 0.4, 0.05);
    CHECK(chan.total_area() == doctest::Approx(0.68).epsilon(1e-12));
    audit_conforming(chan, 1.7, 0.4);
    for (int t = 0; t < chan.n_triangles(); ++t) CHECK(chan.diameter(t) <= 1.5 * 0.05);

    TriMesh coarse = generate_rect_mesh(1.0, 1.0, 2.0);
    CHECK(coarse.n_triangles() >= 2);
    audit_conforming(coarse, 1.0, 1.0);

    CHECK_THROWS_AS(generate_rect_mesh(-1.0, 1.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(generate_rect_mesh(1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("boundary markers cover all four sides") {
    TriMesh m = generate_rect_mesh(2.0, 1.0, 0.5);
    std::set<BoundaryMarker> seen;
    for (const auto& [edge, marker] : m.boundary_edges) {
        seen.insert(marker);
        for (int v : edge) {
            const auto& p = m.vertices[v];
            switch (marker) {
                case BoundaryMarker::Left: CHECK(p.x() == doctest::Approx(0.0)); break;
                case BoundaryMarker::Right: CHECK(p.x() == doctest::Approx(2.0)); break;
                case BoundaryMarker::Bottom: CHECK(p.y() == doctest::Approx(0.0)); break;
                case BoundaryMarker::Top: CHECK(p.y() == doctest::Approx(1.0)); break;
            }
        }
    }
    CHECK(seen.size() == 4);
}

TEST_CASE("jump indicator vanishes for globally linear and constant fields") {
    TriMesh m = generate_rect_mesh(1.0, 1.0, 0.25);
    Eigen::VectorXd linear(m.n_vertices()), constant(m.n_vertices());
    for (int v = 0; v < m.n_vertices(); ++v) {
        linear[v] = 2.0 * m.vertices[v].x() - 0.7 * m.vertices[v].y() + 0.3;
        constant[v] = 4.2;
    }
    CHECK(jump_indicator(m, linear).maxCoeff() <= 1e-12);
    CHECK(jump_indicator(m, constant).maxCoeff() <= 1e-12);

    Eigen::VectorXd bad(3);
    CHECK_THROWS_AS(jump_indicator(m, bad), std::invalid_argument);
}

TEST_CASE("jump indicator on a two-triangle square matches the hand value") {
    // unit square split along the diagonal (0,0)-(1,1); tent value 1 at (0,0)
    TriMesh m;
    m.vertices = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    m.generation = {0, 0};
    m.boundary_edges[{0, 1}] = BoundaryMarker::Bottom;
    m.boundary_edges[{1, 2}] = BoundaryMarker::Right;
    m.boundary_edges[{2, 3}] = BoundaryMarker::Top;
    m.boundary_edges[{0, 3}] = BoundaryMarker::Left;
    m.finalize();

    Eigen::VectorXd tent(4);
    tent << 1.0, 0.0, 0.0, 0.0;
    // T0: grad = (-1, 0); T1: grad = (0, -1). Shared edge direction (1,1)/sqrt2,
    // normal (-1,1)/sqrt2: jump = (grad0 - grad1).n = (−1,1).(−1,1)/√2 = 2/√2 = √2.
    // eta_T^2 = |e| * jump^2 = sqrt(2) * 2.
    Eigen::VectorXd eta = jump_indicator(m, tent);
    double expected = std::sqrt(std::sqrt(2.0) * 2.0);
    CHECK(eta[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(eta[1] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("dorfler marking: greedy bulk criterion") {
    Eigen::VectorXd eq = Eigen::VectorXd::Constant(7, 2.0);
    auto all = dorfler_mark(eq, 1.0);
    CHECK(all.size() == 7);

    Eigen::VectorXd spike(3);
    spike << 3.0, 0.0, 0.0;
    auto one = dorfler_mark(spike, 0.5);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == 0);

    Eigen::VectorXd eta(4);  // eta^2 = 4, 3, 2, 1
    eta << 2.0, std::sqrt(3.0), std::sqrt(2.0), 1.0;
    auto marked = dorfler_mark(eta, 0.6);
    REQUIRE(marked.size() == 2);
    CHECK(marked[0] == 0);
    CHECK(marked[1] == 1);

    CHECK_THROWS_AS(dorfler_mark(eta, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(dorfler_mark(eta, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(dorfler_mark(Eigen::VectorXd(), 0.5), std::invalid_argument);
}

TEST_CASE("dorfler bulk criterion verified by re-summation on random data") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Eigen::VectorXd eta(200);
    for (int i = 0; i < eta.size(); ++i) eta[i] = dist(rng);
    for (double frac : {0.1, 0.5, 0.9, 1.0}) {
        auto marked = dorfler_mark(eta, frac);
        double total = 0, part = 0;
        for (int i = 0; i < eta.size(); ++i) total += eta[i] * eta[i];
        for (int i : marked) part += eta[i] * eta[i];
        CHECK(part >= frac * total * (1.0 - 1e-12));
        // minimality: dropping the smallest marked element breaks the bound
        if (!marked.empty() && frac < 1.0) {
            double weakest = 1e300;
            for (int i : marked) weakest = std::min(weakest, eta[i] * eta[i]);
            CHECK(part - weakest < frac * total);
        }
    }
}

TEST_CASE("refine: empty marking returns an identical mesh") {
    TriMesh m = generate_rect_mesh(1.0, 1.0, 0.5);
    RefineResult r = refine(m, {});
    CHECK(r.mesh.n_triangles() == m.n_triangles());
    CHECK(r.mesh.n_vertices() == m.n_vertices());
    CHECK(r.prolongation.midpoints.empty());
}

TEST_CASE("refine: mark all preserves area and subdivides everything") {
    TriMesh m = generate_rect_mesh(1.3, 0.7, 0.3);
    std::vector<int> all(m.n_triangles());
    for (int t = 0; t < m.n_triangles(); ++t) all[t] = t;
    RefineResult r = refine(m, all);
    CHECK(r.mesh.n_triangles() >= 2 * m.n_triangles());
    CHECK(r.mesh.total_area() == doctest::Approx(m.total_area()).epsilon(1e-12));
    audit_conforming(r.mesh, 1.3, 0.7);
    for (int gen : r.mesh.generation) CHECK(gen >= 1);
}

TEST_CASE("refine: single interior triangle stays conforming (closure audit)") {
    TriMesh m = generate_rect_mesh(1.0, 1.0, 0.25);
    int interior = -1;
    for (int t = 0; t < m.n_triangles(); ++t) {
        const auto& tri = m.triangles[t];
        bool touches = false;
        for (int k = 0; k < 3; ++k)
            if (m.is_boundary_edge(tri[k], tri[(k + 1) % 3])) touches = true;
        if (!touches) { interior = t; break; }
    }
    REQUIRE(interior >= 0);
    RefineResult r = refine(m, {interior});
    audit_conforming(r.mesh, 1.0, 1.0);
    CHECK(r.mesh.n_triangles() > m.n_triangles());
}

TEST_CASE("repeated random refinement stays conforming and area-exact") {
    TriMesh m = generate_rect_mesh(1.0, 0.5, 0.25);
    std::mt19937 rng(3);
    for (int round = 0; round < 6; ++round) {
        std::uniform_int_distribution<int> pick(0, m.n_triangles() - 1);
        std::set<int> marked;
        for (int i = 0; i < m.n_triangles() / 3 + 1; ++i) marked.insert(pick(rng));
        RefineResult r = refine(m, {marked.begin(), marked.end()});
        m = r.mesh;
        audit_conforming(m, 1.0, 0.5);
    }
}

TEST_CASE("prolongation is exact for globally linear fields") {
    TriMesh m = generate_rect_mesh(1.0, 1.0, 0.5);
    auto lin = [](const Eigen::Vector2d& p) { return 3.0 * p.x() - 1.5 * p.y() + 0.25; };
    Eigen::VectorXd f(m.n_vertices());
    for (int v = 0; v < m.n_vertices(); ++v) f[v] = lin(m.vertices[v]);

    std::mt19937 rng(11);
    for (int round = 0; round < 4; ++round) {
        std::uniform_int_distribution<int> pick(0, m.n_triangles() - 1);
        std::vector<int> marked{pick(rng), pick(rng)};
        RefineResult r = refine(m, marked);
        f = r.prolongation.apply(f);
        m = r.mesh;
        for (int v = 0; v < m.n_vertices(); ++v)
            CHECK(f[v] == doctest::Approx(lin(m.vertices[v])).epsilon(1e-14));
    }
}
