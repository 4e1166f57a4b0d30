#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "tetvol/rng.hpp"
#include "tetvol/tet_grid.hpp"

using namespace tetvol;

namespace {

std::uint32_t q(double x) { return static_cast<std::uint32_t>(std::lround(x * kCoordOne)); }
Vertex vert(double x, double y, double z) { return Vertex{{q(x), q(y), q(z)}}; }

// position multiset of a tet, sorted for order-free comparison
std::array<std::array<double, 3>, 4> corner_set(const TetGrid& g, TetId t) {
    std::array<std::array<double, 3>, 4> s;
    for (int i = 0; i < 4; ++i) {
        Vec3 p = g.vertex_position(g.tet(t).verts[i]);
        s[i] = {p.x, p.y, p.z};
    }
    std::sort(s.begin(), s.end());
    return s;
}

TetId find_leaf_with_corners(const TetGrid& g, std::array<std::array<double, 3>, 4> want) {
    std::sort(want.begin(), want.end());
    for (TetId t : g.leaf_ids())
        if (corner_set(g, t) == want) return t;
    return kNoTet;
}

std::array<std::uint64_t, 6> sorted_edge_sq(const TetGrid& g, TetId t) {
    auto e = g.tet_edge_sq(t);
    std::sort(e.begin(), e.end());
    return e;
}

TetGrid fuzzed_grid(int steps, std::uint64_t seed, int max_level = kLevelCap) {
    TetGrid g = TetGrid::init_roots(max_level);
    for (int i = 0; i < steps; ++i) {
        auto leaves = g.leaf_ids();
        std::uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ull * (i + 1));
        g.refine_conforming(leaves[h % leaves.size()]);
    }
    return g;
}

}  // namespace

TEST_CASE("init_roots: 24 leaves of volume 1/24, conforming") {
    TetGrid g = TetGrid::init_roots();
    CHECK(g.leaf_count() == 24);
    CHECK(g.tet_count() == 24);
    CHECK(g.vertex_count() == 8 + 6 + 1);  // corners + face centers + cube center
    for (TetId t : g.leaf_ids()) CHECK(g.tet_volume(t) == doctest::Approx(1.0 / 24).epsilon(1e-13));
    auto rep = g.validate();
    INFO(rep.first_violation);
    CHECK(rep.ok);
    CHECK(rep.leaf_count == 24);
}

TEST_CASE("init_roots: halfedge (0,0,0)->(1,0,0) on face z=0 is a root") {
    TetGrid g = TetGrid::init_roots();
    TetId t = find_leaf_with_corners(g, {{{0, 0, 0}, {1, 0, 0}, {0.5, 0.5, 0}, {0.5, 0.5, 0.5}}});
    REQUIRE(t != kNoTet);
    // and its refinement edge is the unit-length cube edge
    auto [a, b] = g.refinement_edge(t);
    std::array<std::array<double, 3>, 2> got = {
        {{g.vertex_position(a).x, g.vertex_position(a).y, g.vertex_position(a).z},
         {g.vertex_position(b).x, g.vertex_position(b).y, g.vertex_position(b).z}}};
    std::sort(got.begin(), got.end());
    CHECK(got[0] == std::array<double, 3>{0, 0, 0});
    CHECK(got[1] == std::array<double, 3>{1, 0, 0});
}

TEST_CASE("face normal table: 18 unit directions closed under negation via id^1") {
    const auto& tab = face_normal_table();
    CHECK(tab.size() == 18);
    for (std::size_t i = 0; i < tab.size(); ++i) {
        CHECK(length(tab[i]) == doctest::Approx(1.0).epsilon(1e-15));
        Vec3 neg = tab[i ^ 1];
        CHECK(neg.x == doctest::Approx(-tab[i].x).epsilon(1e-15));
        CHECK(neg.y == doctest::Approx(-tab[i].y).epsilon(1e-15));
        CHECK(neg.z == doctest::Approx(-tab[i].z).epsilon(1e-15));
    }
    // pairwise distinct
    for (std::size_t i = 0; i < tab.size(); ++i)
        for (std::size_t j = i + 1; j < tab.size(); ++j)
            CHECK(dot(tab[i], tab[j]) < 1.0 - 1e-9);
}

TEST_CASE("face_normal_id: axis face, diagonal face, off-table rejection") {
    // base face of the z=0 root tet: outward normal (0,0,-1)
    std::uint8_t id = face_normal_id(vert(0, 0, 0), vert(1, 0, 0), vert(0.5, 0.5, 0), vert(0.5, 0.25, 0.125));
    Vec3 n = face_normal_table()[id];
    CHECK(n.x == 0.0);
    CHECK(n.y == 0.0);
    CHECK(n.z == -1.0);

    // diagonal face spanned by (1,0,0) and (0.5,0.5,0.5): direction (0,-1,1)/sqrt(2) up to sign;
    // the interior point sits on the y > z side, so outward is (0,-1,1)/sqrt(2)
    std::uint8_t id2 = face_normal_id(vert(0, 0, 0), vert(1, 0, 0), vert(0.5, 0.5, 0.5), vert(0.5, 0.5, 0.25));
    Vec3 n2 = face_normal_table()[id2];
    const double s = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(n2.x) < 1e-15);
    CHECK(n2.y == doctest::Approx(-s).epsilon(1e-15));
    CHECK(n2.z == doctest::Approx(s).epsilon(1e-15));

    // a direction outside the 18-entry family
    CHECK_THROWS_AS(face_normal_id(vert(0, 0, 0), vert(1, 0, 0), vert(0, 0.25, 1), vert(0.5, 0.5, 0.5)),
                    NotCanonical);
}

TEST_CASE("refinement_edge: root picks the cube edge; child edge has squared length 3/4") {
    TetGrid g = TetGrid::init_roots();
    TetId root = find_leaf_with_corners(g, {{{0, 0, 0}, {1, 0, 0}, {0.5, 0.5, 0}, {0.5, 0.5, 0.5}}});
    REQUIRE(root != kNoTet);

    auto edges = g.tet_edge_sq(root);
    std::uint64_t longest = *std::max_element(edges.begin(), edges.end());
    CHECK(longest == (std::uint64_t(1) << 48));  // the unit cube edge, exactly

    auto [ca, cb] = g.bisect(root);
    for (TetId c : {ca, cb}) {
        auto [a, b] = g.refinement_edge(c);
        std::uint64_t d0 = 0;
        {
            const Vertex& va = g.vertex(a);
            const Vertex& vb = g.vertex(b);
            for (int i = 0; i < 3; ++i) {
                std::int64_t d = std::int64_t(va.q[i]) - std::int64_t(vb.q[i]);
                d0 += std::uint64_t(d * d);
            }
        }
        CHECK(d0 == (std::uint64_t(3) << 46));  // 3/4 in fixed-point units
        auto child_edges = g.tet_edge_sq(c);
        CHECK(d0 == *std::max_element(child_edges.begin(), child_edges.end()));
    }
}

TEST_CASE("bisect: midpoint vertex, child volumes 1/48, stated child vertex sets") {
    TetGrid g = TetGrid::init_roots();
    TetId root = find_leaf_with_corners(g, {{{0, 0, 0}, {1, 0, 0}, {0.5, 0.5, 0}, {0.5, 0.5, 0.5}}});
    REQUIRE(root != kNoTet);
    auto [ca, cb] = g.bisect(root);

    CHECK(g.find_vertex(q(0.5), q(0.0), q(0.0)).has_value());
    CHECK(g.tet_volume(ca) == doctest::Approx(1.0 / 48).epsilon(1e-13));
    CHECK(g.tet_volume(cb) == doctest::Approx(1.0 / 48).epsilon(1e-13));
    CHECK_FALSE(g.tet(root).is_leaf());

    std::set<std::array<std::array<double, 3>, 4>> got = {corner_set(g, ca), corner_set(g, cb)};
    auto mk = [](std::array<std::array<double, 3>, 4> s) {
        std::sort(s.begin(), s.end());
        return s;
    };
    std::set<std::array<std::array<double, 3>, 4>> want = {
        mk({{{0, 0, 0}, {0.5, 0, 0}, {0.5, 0.5, 0}, {0.5, 0.5, 0.5}}}),
        mk({{{1, 0, 0}, {0.5, 0, 0}, {0.5, 0.5, 0}, {0.5, 0.5, 0.5}}}),
    };
    CHECK(got == want);
}

TEST_CASE("three uniform passes: 192 congruent leaves scaled by 1/2") {
    TetGrid g = TetGrid::init_roots();
    auto root_edges = sorted_edge_sq(g, g.roots()[0]);
    refine_uniform(g, 3);
    CHECK(g.leaf_count() == 192);
    auto rep = g.validate();
    INFO(rep.first_violation);
    CHECK(rep.ok);

    std::array<std::uint64_t, 6> want;  // edge lengths halve => squared lengths quarter
    for (int i = 0; i < 6; ++i) want[i] = root_edges[i] / 4;
    for (TetId t : g.leaf_ids()) {
        CHECK(g.tet_volume(t) == doctest::Approx(1.0 / 192).epsilon(1e-12));
        CHECK(sorted_edge_sq(g, t) == want);
    }
}

TEST_CASE("refine_conforming: splits the edge ring, rejects non-leaves") {
    TetGrid g = TetGrid::init_roots();
    TetId root = g.roots()[0];
    auto [ea, eb] = g.refinement_edge(root);
    auto ring_before = g.edge_ring(ea, eb);
    CHECK(ring_before.size() >= 2);  // a cube edge is shared by several roots

    auto new_leaves = g.refine_conforming(root);
    CHECK(new_leaves.size() == 2 * ring_before.size());
    for (TetId t : ring_before) CHECK_FALSE(g.tet(t).is_leaf());
    CHECK(g.edge_ring(ea, eb).empty());  // the split edge is gone from the leaf ring

    auto rep = g.validate();
    INFO(rep.first_violation);
    CHECK(rep.ok);

    CHECK_THROWS_AS(g.refine_conforming(root), NotALeaf);
}

TEST_CASE("conformity fuzz: seeded refinements keep validate green") {
    TetGrid g = fuzzed_grid(120, 42);
    auto rep = g.validate();
    INFO(rep.first_violation);
    CHECK(rep.ok);
    CHECK(g.leaf_count() > 240);
}

TEST_CASE("level cap: refining at the cap throws MaxLevelExceeded") {
    TetGrid g = TetGrid::init_roots(1);
    auto fresh = g.refine_conforming(g.roots()[0]);
    REQUIRE(!fresh.empty());
    CHECK(g.tet(fresh[0]).level == 1);
    CHECK_THROWS_AS(g.refine_conforming(fresh[0]), MaxLevelExceeded);
}

TEST_CASE("locate_point: centroids, interior points, boundary determinism") {
    TetGrid g = fuzzed_grid(60, 7);
    for (TetId t : g.leaf_ids()) CHECK(g.locate_point(g.tet_centroid(t)) == t);

    // random interior points: the returned leaf must actually contain the point
    for (int i = 0; i < 2000; ++i) {
        RngStream rng(13, 0, i);
        Vec3 p{rng.next(), rng.next(), rng.next()};
        TetId t = g.locate_point(p);
        auto c = g.tet_corners(t);
        // closed containment via signed volumes against each face
        for (int f = 0; f < 4; ++f) {
            Vec3 a = c[(f + 1) & 3], b = c[(f + 2) & 3], d = c[(f + 3) & 3];
            Vec3 n = cross(b - a, d - a);
            double s_p = dot(n, p - a);
            double s_f = dot(n, c[f] - a);
            CHECK(s_p * s_f >= -1e-12);  // p on the same side as the opposite corner
        }
    }

    CHECK(g.locate_point(Vec3{0.5, 0.5, 0.5}) == g.locate_point(Vec3{0.5, 0.5, 0.5}));
    CHECK_THROWS_AS(g.locate_point(Vec3{1.5, 0.5, 0.5}), OutsideGrid);
}

TEST_CASE("validate: fault injection is detected") {
    TetGrid g = fuzzed_grid(20, 3);
    REQUIRE(g.validate().ok);
    auto verts = g.vertices();
    auto tets = g.tets();
    auto roots = g.roots();

    SUBCASE("severed neighbor link") {
        [&] {
            for (auto& t : tets)
                if (t.is_leaf())
                    for (auto& nb : t.neighbors)
                        if (nb != kNoTet) {
                            nb = kNoTet;
                            return;
                        }
        }();
        TetGrid bad = TetGrid::assemble(verts, tets, roots, kLevelCap);
        CHECK_FALSE(bad.validate().ok);
    }
    SUBCASE("flipped stored normal") {
        for (auto& t : tets)
            if (t.is_leaf()) {
                t.normal_ids[0] ^= 1;
                break;
            }
        TetGrid bad = TetGrid::assemble(verts, tets, roots, kLevelCap);
        CHECK_FALSE(bad.validate().ok);
    }
    SUBCASE("displaced vertex") {
        verts.back().q[0] += 17;  // arbitrary off-lattice nudge
        TetGrid bad = TetGrid::assemble(verts, tets, roots, kLevelCap);
        CHECK_FALSE(bad.validate().ok);
    }
}

TEST_CASE("assemble: rebuilding from pools reproduces the grid") {
    TetGrid g = fuzzed_grid(40, 11);
    TetGrid h = TetGrid::assemble(g.vertices(), g.tets(), g.roots(), g.max_level());
    CHECK(h.leaf_count() == g.leaf_count());
    CHECK(h.edge_map_size() == g.edge_map_size());
    auto rep = h.validate();
    INFO(rep.first_violation);
    CHECK(rep.ok);
    for (TetId t = 0; t < g.tet_count(); ++t) {
        CHECK(h.tet(t).verts == g.tet(t).verts);
        CHECK(h.tet(t).neighbors == g.tet(t).neighbors);
    }
}

TEST_CASE("brute_force_segments: misses, tiling, and sorted order") {
    TetGrid g = fuzzed_grid(30, 5);
    CHECK(brute_force_segments(g, Ray{{-1, -1, -1}, normalize(Vec3{0, 0, 1})}).empty());

    for (int i = 0; i < 50; ++i) {
        RngStream rng(99, 1, i);
        Vec3 origin{-0.5 + 2.0 * rng.next(), -0.5 + 2.0 * rng.next(), -1.5};
        Vec3 target{rng.next(), rng.next(), rng.next()};
        Ray ray{origin, normalize(target - origin)};
        double t0, t1;
        if (!intersect_unit_cube(ray, t0, t1)) continue;
        auto segs = brute_force_segments(g, ray);
        REQUIRE(!segs.empty());
        CHECK(segs.front().t_enter == doctest::Approx(t0).epsilon(1e-9));
        CHECK(segs.back().t_exit == doctest::Approx(t1).epsilon(1e-9));
        double total = 0;
        for (std::size_t k = 0; k < segs.size(); ++k) {
            total += segs[k].t_exit - segs[k].t_enter;
            if (k) CHECK(segs[k].t_enter == doctest::Approx(segs[k - 1].t_exit).epsilon(1e-9));
        }
        CHECK(total == doctest::Approx(t1 - t0).epsilon(1e-9));
    }
}
