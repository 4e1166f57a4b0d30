#include "tetvol/tet_grid.hpp"

#include <algorithm>
#include <cstring>

namespace tetvol {

namespace {

using i128 = __int128;

// Signed determinant det(v1-v0, v2-v0, v3-v0) in fixed-point units. Coordinate
// differences fit 25 bits, the 2x2 minors 51 bits, the total ~77 bits -> i128.
i128 det_fixed(const Vertex& v0, const Vertex& v1, const Vertex& v2, const Vertex& v3) {
    std::int64_t a[3], b[3], c[3];
    for (int k = 0; k < 3; ++k) {
        a[k] = static_cast<std::int64_t>(v1.q[k]) - v0.q[k];
        b[k] = static_cast<std::int64_t>(v2.q[k]) - v0.q[k];
        c[k] = static_cast<std::int64_t>(v3.q[k]) - v0.q[k];
    }
    std::int64_t m0 = b[1] * c[2] - b[2] * c[1];
    std::int64_t m1 = b[2] * c[0] - b[0] * c[2];
    std::int64_t m2 = b[0] * c[1] - b[1] * c[0];
    return static_cast<i128>(a[0]) * m0 + static_cast<i128>(a[1]) * m1 + static_cast<i128>(a[2]) * m2;
}

constexpr double kVolumeUnit = 0x1p-72 / 6.0;  // det (fixed units) -> real volume

}  // namespace

const std::array<Vec3, 18>& face_normal_table() {
    static const std::array<Vec3, 18> table = [] {
        const double s = 1.0 / std::sqrt(2.0);
        return std::array<Vec3, 18>{{
            {1, 0, 0}, {-1, 0, 0},
            {0, 1, 0}, {0, -1, 0},
            {0, 0, 1}, {0, 0, -1},
            {s, s, 0}, {-s, -s, 0},
            {s, -s, 0}, {-s, s, 0},
            {s, 0, s}, {-s, 0, -s},
            {s, 0, -s}, {-s, 0, s},
            {0, s, s}, {0, -s, -s},
            {0, s, -s}, {0, -s, s},
        }};
    }();
    return table;
}

std::uint8_t face_normal_id(const Vertex& a, const Vertex& b, const Vertex& c, const Vertex& interior) {
    std::int64_t u[3], v[3];
    for (int k = 0; k < 3; ++k) {
        u[k] = static_cast<std::int64_t>(b.q[k]) - a.q[k];
        v[k] = static_cast<std::int64_t>(c.q[k]) - a.q[k];
    }
    std::int64_t n[3] = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    if (n[0] == 0 && n[1] == 0 && n[2] == 0) throw NotCanonical("degenerate face");
    i128 side = 0;
    for (int k = 0; k < 3; ++k) side += static_cast<i128>(n[k]) * (static_cast<std::int64_t>(interior.q[k]) - a.q[k]);
    if (side == 0) throw NotCanonical("interior point is coplanar with face");
    if (side > 0)  // make it outward
        for (auto& nk : n) nk = -nk;

    int zeros = (n[0] == 0) + (n[1] == 0) + (n[2] == 0);
    if (zeros == 2) {  // axis normal
        for (int k = 0; k < 3; ++k)
            if (n[k] != 0) return static_cast<std::uint8_t>(2 * k + (n[k] > 0 ? 0 : 1));
    } else if (zeros == 1) {  // face diagonal: the two nonzero components must match in magnitude
        int zk = n[0] == 0 ? 0 : (n[1] == 0 ? 1 : 2);
        int i = zk == 0 ? 1 : 0;
        int j = zk == 2 ? 1 : 2;
        if (std::abs(n[i]) != std::abs(n[j])) throw NotCanonical("normal direction not in table");
        int base = zk == 2 ? 6 : (zk == 1 ? 10 : 14);
        bool pi = n[i] > 0, pj = n[j] > 0;
        if (pi && pj) return static_cast<std::uint8_t>(base + 0);
        if (!pi && !pj) return static_cast<std::uint8_t>(base + 1);
        if (pi && !pj) return static_cast<std::uint8_t>(base + 2);
        return static_cast<std::uint8_t>(base + 3);
    }
    throw NotCanonical("normal direction not in table");
}

std::size_t TetGrid::FaceKeyHash::operator()(const FaceKey& k) const {
    std::uint64_t h = 0x243f6a8885a308d3ull;
    for (std::uint32_t x : k.v) h = (h ^ x) * 0x100000001b3ull, h ^= h >> 29;
    return static_cast<std::size_t>(h * 0x9e3779b97f4a7c15ull >> 1);
}

std::size_t TetGrid::VertexKeyHash::operator()(const std::array<std::uint32_t, 3>& k) const {
    std::uint64_t h = 0x452821e638d01377ull;
    for (std::uint32_t x : k) h = (h ^ x) * 0x100000001b3ull, h ^= h >> 29;
    return static_cast<std::size_t>(h * 0x9e3779b97f4a7c15ull >> 1);
}

VertexId TetGrid::intern_vertex(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
    std::array<std::uint32_t, 3> key{x, y, z};
    auto it = vert_lookup_.find(key);
    if (it != vert_lookup_.end()) return it->second;
    VertexId id = static_cast<VertexId>(verts_.size());
    verts_.push_back(Vertex{key});
    vert_lookup_.emplace(key, id);
    return id;
}

TetGrid::FaceKey TetGrid::face_key(TetId t, int slot) const {
    const auto& v = tets_[t].verts;
    std::array<std::uint32_t, 3> k{};
    int n = 0;
    for (int s = 0; s < 4; ++s)
        if (s != slot) k[n++] = v[s];
    std::sort(k.begin(), k.end());
    return FaceKey{k};
}

std::uint64_t TetGrid::edge_key(VertexId a, VertexId b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

void TetGrid::compute_normals(TetId t) {
    Tet& tt = tets_[t];
    for (int slot = 0; slot < 4; ++slot) {
        const Vertex* f[3];
        int n = 0;
        for (int s = 0; s < 4; ++s)
            if (s != slot) f[n++] = &verts_[tt.verts[s]];
        tt.normal_ids[slot] = face_normal_id(*f[0], *f[1], *f[2], verts_[tt.verts[slot]]);
    }
}

void TetGrid::register_leaf(TetId t) {
    Tet& tt = tets_[t];
    for (int slot = 0; slot < 4; ++slot) {
        FaceEntry& e = face_map_[face_key(t, slot)];
        if (e.n == 0) {
            e.tet[0] = t;
            e.slot[0] = static_cast<std::uint8_t>(slot);
            e.n = 1;
            tt.neighbors[slot] = kNoTet;
        } else if (e.n == 1) {
            e.tet[1] = t;
            e.slot[1] = static_cast<std::uint8_t>(slot);
            e.n = 2;
            tt.neighbors[slot] = e.tet[0];
            tets_[e.tet[0]].neighbors[e.slot[0]] = t;
        } else {
            throw GridError("face already shared by two leaves");
        }
    }
    static constexpr int P[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    for (auto& p : P) edge_map_[edge_key(tt.verts[p[0]], tt.verts[p[1]])].push_back(t);
    ++leaf_count_;
}

void TetGrid::unregister_leaf(TetId t) {
    Tet& tt = tets_[t];
    for (int slot = 0; slot < 4; ++slot) {
        auto it = face_map_.find(face_key(t, slot));
        if (it == face_map_.end()) throw GridError("face map entry missing");
        FaceEntry& e = it->second;
        if (e.n == 2) {
            int keep = (e.tet[0] == t && e.slot[0] == slot) ? 1 : 0;
            TetId other = e.tet[keep];
            std::uint8_t os = e.slot[keep];
            e.tet[0] = other;
            e.slot[0] = os;
            e.n = 1;
            tets_[other].neighbors[os] = kNoTet;
        } else {
            face_map_.erase(it);
        }
    }
    static constexpr int P[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    for (auto& p : P) {
        auto it = edge_map_.find(edge_key(tt.verts[p[0]], tt.verts[p[1]]));
        if (it == edge_map_.end()) throw GridError("edge map entry missing");
        auto& ring = it->second;
        ring.erase(std::find(ring.begin(), ring.end(), t));
        if (ring.empty()) edge_map_.erase(it);
    }
    tt.neighbors = {kNoTet, kNoTet, kNoTet, kNoTet};  // internal tets carry no adjacency
    --leaf_count_;
}

TetGrid TetGrid::init_roots(int max_level) {
    if (max_level < 1 || max_level > kLevelCap) throw GridError("max_level out of range");
    TetGrid g;
    g.max_level_ = max_level;
    constexpr std::uint32_t S = kCoordOne;
    constexpr std::uint32_t H = S / 2;
    const VertexId center = g.intern_vertex(H, H, H);

    int root_idx = 0;
    for (int axis = 0; axis < 3; ++axis) {
        for (int side = 0; side < 2; ++side) {
            std::array<std::uint32_t, 3> fc{H, H, H};
            fc[axis] = side ? S : 0;
            const VertexId face_center = g.intern_vertex(fc[0], fc[1], fc[2]);

            const int u = axis == 0 ? 1 : 0;
            const int w = axis == 2 ? 1 : 2;
            // face corners in ring order
            std::array<VertexId, 4> corner{};
            static constexpr std::uint32_t ring[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
            for (int k = 0; k < 4; ++k) {
                std::array<std::uint32_t, 3> c{};
                c[axis] = side ? S : 0;
                c[u] = ring[k][0] * S;
                c[w] = ring[k][1] * S;
                corner[k] = g.intern_vertex(c[0], c[1], c[2]);
            }

            for (int k = 0; k < 4; ++k) {  // one tet per halfedge of this face
                VertexId p = corner[k];
                VertexId q = corner[(k + 1) % 4];
                // pick the direction that makes (start, face center, cube center, end) positive
                if (det_fixed(g.verts_[p], g.verts_[face_center], g.verts_[center], g.verts_[q]) < 0) std::swap(p, q);
                Tet tet;
                tet.verts = {p, face_center, center, q};
                tet.level = 0;
                TetId id = static_cast<TetId>(g.tets_.size());
                g.tets_.push_back(tet);
                g.roots_[root_idx++] = id;
                if (det_fixed(g.verts_[p], g.verts_[face_center], g.verts_[center], g.verts_[q]) <= 0)
                    throw GridError("root tessellation produced a non-positive tet");
            }
        }
    }
    for (TetId id : g.roots_) {
        g.compute_normals(id);
        g.register_leaf(id);
    }
    return g;
}

TetGrid TetGrid::assemble(std::vector<Vertex> vertices, std::vector<Tet> tets, std::array<TetId, 24> roots,
                          int max_level) {
    TetGrid g;
    g.verts_ = std::move(vertices);
    g.tets_ = std::move(tets);
    g.roots_ = roots;
    g.max_level_ = max_level;
    g.vert_lookup_.reserve(g.verts_.size());
    for (VertexId v = 0; v < g.verts_.size(); ++v) g.vert_lookup_.emplace(g.verts_[v].q, v);
    // Rebuild edge rings and face pairings from the leaves. Stored neighbor links
    // are left untouched; validate() cross-checks them against the face pairing.
    static constexpr int P[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    for (TetId t = 0; t < g.tets_.size(); ++t) {
        if (!g.tets_[t].is_leaf()) continue;
        ++g.leaf_count_;
        const Tet& tt = g.tets_[t];
        for (auto& p : P) g.edge_map_[edge_key(tt.verts[p[0]], tt.verts[p[1]])].push_back(t);
        for (int slot = 0; slot < 4; ++slot) {
            FaceEntry& e = g.face_map_[g.face_key(t, slot)];
            if (e.n < 2) {
                e.tet[e.n] = t;
                e.slot[e.n] = static_cast<std::uint8_t>(slot);
            }
            ++e.n;  // validate() reports n > 2
        }
    }
    return g;
}

std::vector<TetId> TetGrid::leaf_ids() const {
    std::vector<TetId> out;
    out.reserve(leaf_count_);
    for (TetId t = 0; t < tets_.size(); ++t)
        if (tets_[t].is_leaf()) out.push_back(t);
    return out;
}

std::array<Vec3, 4> TetGrid::tet_corners(TetId t) const {
    const auto& v = tets_[t].verts;
    return {verts_[v[0]].position(), verts_[v[1]].position(), verts_[v[2]].position(), verts_[v[3]].position()};
}

Vec3 TetGrid::tet_centroid(TetId t) const {
    auto c = tet_corners(t);
    return (c[0] + c[1] + c[2] + c[3]) * 0.25;
}

double TetGrid::tet_volume(TetId t) const {
    const auto& v = tets_[t].verts;
    i128 d = det_fixed(verts_[v[0]], verts_[v[1]], verts_[v[2]], verts_[v[3]]);
    return static_cast<double>(d) * kVolumeUnit;
}

std::array<std::uint64_t, 6> TetGrid::tet_edge_sq(TetId t) const {
    static constexpr int P[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    const auto& v = tets_[t].verts;
    std::array<std::uint64_t, 6> out{};
    for (int e = 0; e < 6; ++e) {
        const auto& qa = verts_[v[P[e][0]]].q;
        const auto& qb = verts_[v[P[e][1]]].q;
        std::uint64_t L = 0;
        for (int k = 0; k < 3; ++k) {
            std::int64_t d = static_cast<std::int64_t>(qa[k]) - qb[k];
            L += static_cast<std::uint64_t>(d * d);
        }
        out[e] = L;
    }
    return out;
}

std::array<int, 2> TetGrid::refinement_edge_slots(TetId t) const {
    static constexpr int P[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    const auto& v = tets_[t].verts;
    auto lens = tet_edge_sq(t);
    int best = 0;
    std::uint64_t best_len = 0;
    VertexId best_min = 0, best_max = 0;
    for (int e = 0; e < 6; ++e) {
        VertexId mn = std::min(v[P[e][0]], v[P[e][1]]);
        VertexId mx = std::max(v[P[e][0]], v[P[e][1]]);
        bool better;
        if (e == 0)
            better = true;
        else if (lens[e] != best_len)
            better = lens[e] > best_len;
        else  // exact ties never occur in this family; break towards smaller ids anyway
            better = mn < best_min || (mn == best_min && mx < best_max);
        if (better) {
            best = e;
            best_len = lens[e];
            best_min = mn;
            best_max = mx;
        }
    }
    return {P[best][0], P[best][1]};
}

std::pair<VertexId, VertexId> TetGrid::refinement_edge(TetId t) const {
    auto s = refinement_edge_slots(t);
    VertexId a = tets_[t].verts[s[0]];
    VertexId b = tets_[t].verts[s[1]];
    return {std::min(a, b), std::max(a, b)};
}

std::pair<TetId, TetId> TetGrid::bisect(TetId t) {
    if (t >= tets_.size()) throw GridError("bisect: bad tet id");
    if (!tets_[t].is_leaf()) throw NotALeaf("bisect: tet is not a leaf");
    if (tets_[t].level >= max_level_) throw MaxLevelExceeded("bisect: level cap reached");

    const auto slots = refinement_edge_slots(t);
    const Tet parent = tets_[t];  // copy: the pool may reallocate below
    const VertexId vi = parent.verts[slots[0]];
    const VertexId vj = parent.verts[slots[1]];
    const auto& qa = verts_[vi].q;
    const auto& qb = verts_[vj].q;
    std::array<std::uint32_t, 3> mid{};
    for (int k = 0; k < 3; ++k) {
        std::uint64_t s = static_cast<std::uint64_t>(qa[k]) + qb[k];
        if (s & 1u) throw GridError("bisect: midpoint not representable");
        mid[k] = static_cast<std::uint32_t>(s / 2);
    }
    const VertexId vm = intern_vertex(mid[0], mid[1], mid[2]);

    unregister_leaf(t);

    Tet child_a = parent;  // keeps vi
    child_a.verts[slots[1]] = vm;
    Tet child_b = parent;  // keeps vj
    child_b.verts[slots[0]] = vm;
    for (Tet* c : {&child_a, &child_b}) {
        c->parent = t;
        c->children = {kNoTet, kNoTet};
        c->neighbors = {kNoTet, kNoTet, kNoTet, kNoTet};
        c->level = static_cast<std::uint8_t>(parent.level + 1);
        c->payload = MediaPayload{};
    }

    const TetId ida = static_cast<TetId>(tets_.size());
    const TetId idb = ida + 1;
    tets_.push_back(child_a);
    tets_.push_back(child_b);
    tets_[t].children = {ida, idb};
    compute_normals(ida);
    compute_normals(idb);
    register_leaf(ida);
    register_leaf(idb);
    return {ida, idb};
}

std::vector<TetId> TetGrid::refine_conforming(TetId t) {
    if (t >= tets_.size()) throw GridError("refine_conforming: bad tet id");
    if (!tets_[t].is_leaf()) throw NotALeaf("refine_conforming: tet is not a leaf");
    if (tets_[t].level >= max_level_) throw MaxLevelExceeded("refine_conforming: level cap reached");
    auto [a, b] = refinement_edge(t);
    std::vector<TetId> created;
    refine_edge_recursive(a, b, created, 0);
    std::sort(created.begin(), created.end());
    created.erase(std::unique(created.begin(), created.end()), created.end());
    std::erase_if(created, [&](TetId id) { return !tets_[id].is_leaf(); });
    return created;
}

void TetGrid::refine_edge_recursive(VertexId a, VertexId b, std::vector<TetId>& out, int depth) {
    if (depth > 2 * kLevelCap) throw GridError("conforming propagation exceeded its depth bound");
    const VertexId ea = std::min(a, b), eb = std::max(a, b);
    const std::uint64_t key = edge_key(ea, eb);
    for (;;) {
        auto it = edge_map_.find(key);
        if (it == edge_map_.end()) return;  // already handled by a deeper call
        std::vector<TetId> ring = it->second;
        std::sort(ring.begin(), ring.end());

        std::vector<TetId> pending;
        for (TetId r : ring) {
            auto [ra, rb] = refinement_edge(r);
            if (ra != ea || rb != eb) pending.push_back(r);
        }
        if (pending.empty()) {
            for (TetId r : ring) {
                auto [c0, c1] = bisect(r);
                out.push_back(c0);
                out.push_back(c1);
            }
            return;
        }
        for (TetId r : pending) {
            if (!tets_[r].is_leaf()) continue;  // an earlier recursion already split it
            auto [ra, rb] = refinement_edge(r);
            refine_edge_recursive(ra, rb, out, depth + 1);
        }
    }
}

TetId TetGrid::locate_point(const Vec3& p) const {
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0 && p.z >= 0.0 && p.z <= 1.0))
        throw OutsideGrid("locate_point: point outside the unit cube");

    const auto& table = face_normal_table();
    TetId root = kNoTet;
    double best_violation = std::numeric_limits<double>::infinity();
    for (TetId r : roots_) {
        const Tet& tt = tets_[r];
        double worst = 0.0;
        for (int slot = 0; slot < 4; ++slot) {
            const Vec3 n = table[tt.normal_ids[slot]];
            const Vec3 v = verts_[tt.verts[(slot + 1) & 3]].position();
            worst = std::max(worst, dot(n, p - v));
        }
        if (worst <= 1e-12) {
            root = r;
            break;  // ascending id order: first containing root wins
        }
        if (worst < best_violation) {
            best_violation = worst;
            root = r;
        }
    }

    TetId cur = root;
    while (!tets_[cur].is_leaf()) {
        const Tet& tt = tets_[cur];
        const auto slots = refinement_edge_slots(cur);
        const TetId child_a = tt.children[0];
        // child A kept verts[slots[0]]; the midpoint sits at slots[1] in its vertex list
        const Vec3 pm = verts_[tets_[child_a].verts[slots[1]]].position();
        int oa = -1, ob = -1;
        for (int s = 0; s < 4; ++s)
            if (s != slots[0] && s != slots[1]) (oa < 0 ? oa : ob) = s;
        const Vec3 pa = verts_[tt.verts[oa]].position();
        const Vec3 pb = verts_[tt.verts[ob]].position();
        const Vec3 n = cross(pa - pm, pb - pm);
        const double s_ref = dot(n, verts_[tt.verts[slots[0]]].position() - pm);
        const double s_p = dot(n, p - pm);
        const bool take_a = s_ref > 0.0 ? (s_p >= 0.0) : (s_p <= 0.0);  // ties resolve to the lower id
        cur = take_a ? child_a : tt.children[1];
    }
    return cur;
}

ValidationReport TetGrid::validate() const {
    ValidationReport rep;
    auto fail = [&rep](std::string msg) {
        if (rep.ok) {
            rep.ok = false;
            rep.first_violation = std::move(msg);
        }
    };

    if (tets_.size() < 24) {
        fail("fewer than 24 tets");
        return rep;
    }
    for (int i = 0; i < 24; ++i) {
        TetId r = roots_[i];
        if (r >= tets_.size() || tets_[r].level != 0 || tets_[r].parent != kNoTet) {
            fail("root table is inconsistent");
            break;
        }
    }
    if (vert_lookup_.size() != verts_.size()) fail("duplicate vertices in the pool");
    for (const Vertex& v : verts_)
        if (v.q[0] > kCoordOne || v.q[1] > kCoordOne || v.q[2] > kCoordOne) {
            fail("vertex coordinate out of range");
            break;
        }

    // tree structure, orientation, exact volume
    i128 total = 0;
    std::size_t leaves = 0;
    for (TetId t = 0; t < tets_.size(); ++t) {
        const Tet& tt = tets_[t];
        if (tt.level > max_level_) fail("tet exceeds the level cap");
        for (VertexId v : tt.verts)
            if (v >= verts_.size()) {
                fail("vertex id out of range");
                return rep;
            }
        if (tt.is_leaf()) {
            ++leaves;
            i128 d = det_fixed(verts_[tt.verts[0]], verts_[tt.verts[1]], verts_[tt.verts[2]], verts_[tt.verts[3]]);
            if (d <= 0) fail("leaf with non-positive orientation");
            total += d;
        } else {
            if (tt.children[1] == kNoTet || tt.children[0] >= tets_.size() || tt.children[1] >= tets_.size()) {
                fail("internal tet with invalid children");
                continue;
            }
            for (TetId c : tt.children) {
                if (tets_[c].parent != t) fail("child does not point back to its parent");
                if (tets_[c].level != tt.level + 1) fail("child level is not parent level + 1");
            }
            if (tt.payload.present()) fail("internal tet carries a payload");
        }
    }
    rep.leaf_count = leaves;
    if (leaves != leaf_count_) fail("cached leaf count is stale");
    if (total != (static_cast<i128>(6) << 72)) fail("leaf volumes do not sum to the cube volume exactly");

    // conformity + adjacency by exhaustive face matching
    struct FaceRec {
        std::array<std::uint32_t, 3> key;
        TetId t;
        std::uint8_t slot;
    };
    std::vector<FaceRec> faces;
    faces.reserve(leaves * 4);
    for (TetId t = 0; t < tets_.size(); ++t) {
        if (!tets_[t].is_leaf()) continue;
        const Tet& tt = tets_[t];
        for (TetId nb : tt.neighbors)
            if (nb != kNoTet && (nb >= tets_.size() || !tets_[nb].is_leaf())) fail("leaf neighbor is not a leaf");
        for (int slot = 0; slot < 4; ++slot) {
            FaceRec fr;
            int n = 0;
            for (int s = 0; s < 4; ++s)
                if (s != slot) fr.key[n++] = tt.verts[s];
            std::sort(fr.key.begin(), fr.key.end());
            fr.t = t;
            fr.slot = static_cast<std::uint8_t>(slot);
            faces.push_back(fr);
        }
    }
    std::sort(faces.begin(), faces.end(), [](const FaceRec& a, const FaceRec& b) {
        if (a.key != b.key) return a.key < b.key;
        return a.t < b.t || (a.t == b.t && a.slot < b.slot);
    });
    for (std::size_t i = 0; i < faces.size();) {
        std::size_t j = i;
        while (j < faces.size() && faces[j].key == faces[i].key) ++j;
        const std::size_t n = j - i;
        if (n == 1) {
            ++rep.boundary_faces;
            const FaceRec& f = faces[i];
            bool on_surface = false;
            for (int axis = 0; axis < 3 && !on_surface; ++axis) {
                for (std::uint32_t val : {0u, kCoordOne}) {
                    bool all = true;
                    for (std::uint32_t v : f.key) all &= verts_[v].q[axis] == val;
                    if (all) {
                        on_surface = true;
                        break;
                    }
                }
            }
            if (!on_surface) fail("unmatched interior face (T-junction)");
            if (tets_[f.t].neighbors[f.slot] != kNoTet) fail("boundary face has a neighbor link");
        } else if (n == 2) {
            ++rep.interior_faces;
            const FaceRec& fa = faces[i];
            const FaceRec& fb = faces[i + 1];
            if (fa.t == fb.t) fail("tet paired with itself across a face");
            if (tets_[fa.t].neighbors[fa.slot] != fb.t || tets_[fb.t].neighbors[fb.slot] != fa.t)
                fail("neighbor links are not reciprocal");
            if ((tets_[fa.t].normal_ids[fa.slot] ^ 1u) != tets_[fb.t].normal_ids[fb.slot])
                fail("shared face normals are not opposite");
        } else {
            fail("face shared by more than two leaves");
        }
        i = j;
    }

    // stored normals re-derived from geometry
    for (TetId t = 0; t < tets_.size() && rep.ok; ++t) {
        if (!tets_[t].is_leaf()) continue;
        const Tet& tt = tets_[t];
        for (int slot = 0; slot < 4; ++slot) {
            const Vertex* f[3];
            int n = 0;
            for (int s = 0; s < 4; ++s)
                if (s != slot) f[n++] = &verts_[tt.verts[s]];
            try {
                if (face_normal_id(*f[0], *f[1], *f[2], verts_[tt.verts[slot]]) != tt.normal_ids[slot]) {
                    fail("stored face normal id does not match geometry");
                    break;
                }
            } catch (const NotCanonical&) {
                fail("face normal not in the canonical table");
                break;
            }
        }
    }

    // edge rings match a fresh recomputation
    {
        static constexpr int P[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
        std::vector<std::pair<std::uint64_t, TetId>> expect, got;
        expect.reserve(leaves * 6);
        for (TetId t = 0; t < tets_.size(); ++t) {
            if (!tets_[t].is_leaf()) continue;
            const auto& v = tets_[t].verts;
            for (auto& p : P) expect.emplace_back(edge_key(v[p[0]], v[p[1]]), t);
        }
        got.reserve(expect.size());
        for (const auto& [key, ring] : edge_map_)
            for (TetId t : ring) got.emplace_back(key, t);
        std::sort(expect.begin(), expect.end());
        std::sort(got.begin(), got.end());
        if (expect != got) fail("edge rings are stale");
    }

    return rep;
}

std::optional<VertexId> TetGrid::find_vertex(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    auto it = vert_lookup_.find({x, y, z});
    if (it == vert_lookup_.end()) return std::nullopt;
    return it->second;
}

std::vector<TetId> TetGrid::edge_ring(VertexId a, VertexId b) const {
    auto it = edge_map_.find(edge_key(a, b));
    if (it == edge_map_.end()) return {};
    std::vector<TetId> ring = it->second;
    std::sort(ring.begin(), ring.end());
    return ring;
}

void refine_uniform(TetGrid& grid, int levels) {
    for (int pass = 0; pass < levels; ++pass) {
        for (TetId t : grid.leaf_ids())
            if (grid.tet(t).is_leaf()) grid.refine_conforming(t);
    }
}

BruteForceTraverser::BruteForceTraverser(const TetGrid& grid) {
    for (TetId t : grid.leaf_ids()) {
        auto c = grid.tet_corners(t);
        LeafPlanes lp;
        lp.id = t;
        for (int slot = 0; slot < 4; ++slot) {
            Vec3 p0 = c[(slot + 1) & 3], p1 = c[(slot + 2) & 3], p2 = c[(slot + 3) & 3];
            Vec3 n = normalize(cross(p1 - p0, p2 - p0));
            if (dot(n, c[slot] - p0) > 0.0) n = -n;  // orient away from the opposite vertex
            lp.n[slot] = n;
            lp.d[slot] = dot(n, p0);
        }
        leaves_.push_back(lp);
    }
}

std::vector<RaySegment> BruteForceTraverser::segments(const Ray& ray) const {
    std::vector<RaySegment> out;
    for (const LeafPlanes& lp : leaves_) {
        double t0 = ray.t_min, t1 = ray.t_max;
        bool hit = true;
        for (int slot = 0; slot < 4 && hit; ++slot) {
            double denom = dot(lp.n[slot], ray.dir);
            double num = lp.d[slot] - dot(lp.n[slot], ray.origin);
            if (std::abs(denom) < 1e-15) {
                if (num < 0.0) hit = false;  // parallel and outside this half-space
            } else {
                double tp = num / denom;
                if (denom > 0.0)
                    t1 = std::min(t1, tp);
                else
                    t0 = std::max(t0, tp);
                if (t0 > t1) hit = false;
            }
        }
        if (hit && t1 - t0 > 1e-12) out.push_back(RaySegment{lp.id, t0, t1});
    }
    std::sort(out.begin(), out.end(), [](const RaySegment& a, const RaySegment& b) { return a.t_enter < b.t_enter; });
    return out;
}

std::vector<RaySegment> brute_force_segments(const TetGrid& grid, const Ray& ray) {
    return BruteForceTraverser(grid).segments(ray);
}

}  // namespace tetvol
