#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tetvol/geometry.hpp"

namespace tetvol {

using VertexId = std::uint32_t;
using TetId = std::uint32_t;

inline constexpr TetId kNoTet = 0xffffffffu;
inline constexpr int kCoordBits = 24;
inline constexpr std::uint32_t kCoordOne = 1u << kCoordBits;  // fixed-point denominator
inline constexpr int kLevelCap = 48;  // midpoints stay exactly representable up to here

struct GridError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MaxLevelExceeded : GridError {
    using GridError::GridError;
};
struct NotALeaf : GridError {
    using GridError::GridError;
};
struct OutsideGrid : GridError {
    using GridError::GridError;
};
struct NotCanonical : GridError {
    using GridError::GridError;
};

// Fixed-point vertex: position = q / 2^24, each coordinate in [0, 2^24].
struct Vertex {
    std::array<std::uint32_t, 3> q{};

    Vec3 position() const {
        constexpr double inv = 1.0 / static_cast<double>(kCoordOne);
        return {q[0] * inv, q[1] * inv, q[2] * inv};  // exact: 25-bit ints fit a double
    }
    bool operator==(const Vertex& o) const { return q == o.q; }
};

// Per-leaf media coefficients. mask bit 0: density assigned, bit 1: temperature
// valid, bit 2: albedo valid.
struct MediaPayload {
    float density = 0.0f;
    float temperature = 0.0f;
    float albedo = 0.0f;
    std::uint8_t mask = 0;

    bool present() const { return (mask & 1u) != 0; }
    bool has_temperature() const { return (mask & 2u) != 0; }
    bool has_albedo() const { return (mask & 4u) != 0; }
};

struct Tet {
    std::array<VertexId, 4> verts{};
    std::array<TetId, 2> children{kNoTet, kNoTet};
    TetId parent = kNoTet;
    // neighbors[f] faces the triangle opposite verts[f]; kNoTet on the cube boundary
    std::array<TetId, 4> neighbors{kNoTet, kNoTet, kNoTet, kNoTet};
    std::array<std::uint8_t, 4> normal_ids{};  // outward unit normal per face, table index
    std::uint8_t level = 0;
    MediaPayload payload;

    bool is_leaf() const { return children[0] == kNoTet; }
};

// The 18 outward face directions a bisection grid of the unit cube can produce:
// 6 axis normals and 12 face diagonals. Table is ordered so that the opposite
// direction of id n is id n^1.
const std::array<Vec3, 18>& face_normal_table();

// Classify the outward normal of triangle (a,b,c) with `interior` on the inside;
// throws NotCanonical if the direction is not in the table or the face is degenerate.
std::uint8_t face_normal_id(const Vertex& a, const Vertex& b, const Vertex& c, const Vertex& interior);

struct RaySegment {
    TetId cell = kNoTet;
    double t_enter = 0.0;
    double t_exit = 0.0;
};

struct ValidationReport {
    bool ok = true;
    std::string first_violation;
    std::size_t leaf_count = 0;
    std::size_t interior_faces = 0;
    std::size_t boundary_faces = 0;
};

class TetGrid {
public:
    TetGrid() = default;

    // 24-tet tessellation of the unit cube: one tet per (cube edge, incident face)
    // halfedge, built from the face center and the cube center.
    static TetGrid init_roots(int max_level = kLevelCap);

    // Rebuilds lookup structures around existing pools (deserialization). Stored
    // neighbor links are trusted as-is; validate() will catch inconsistent input.
    static TetGrid assemble(std::vector<Vertex> vertices, std::vector<Tet> tets,
                            std::array<TetId, 24> roots, int max_level);

    std::size_t vertex_count() const { return verts_.size(); }
    std::size_t tet_count() const { return tets_.size(); }
    std::size_t leaf_count() const { return leaf_count_; }
    int max_level() const { return max_level_; }

    const Vertex& vertex(VertexId v) const { return verts_[v]; }
    const Tet& tet(TetId t) const { return tets_[t]; }
    const std::vector<Vertex>& vertices() const { return verts_; }
    const std::vector<Tet>& tets() const { return tets_; }
    const std::array<TetId, 24>& roots() const { return roots_; }

    std::vector<TetId> leaf_ids() const;  // ascending id order

    Vec3 vertex_position(VertexId v) const { return verts_[v].position(); }
    std::array<Vec3, 4> tet_corners(TetId t) const;
    Vec3 tet_centroid(TetId t) const;
    double tet_volume(TetId t) const;  // from the exact integer determinant
    // squared edge lengths in units of (1/2^24)^2, slot pairs (0,1),(0,2),(0,3),(1,2),(1,3),(2,3)
    std::array<std::uint64_t, 6> tet_edge_sq(TetId t) const;

    // vertex ids of the unique longest edge (exact comparison; ties broken towards
    // the lexicographically smallest id pair, which never triggers in this family)
    std::pair<VertexId, VertexId> refinement_edge(TetId t) const;

    // Split a leaf at the midpoint of its refinement edge. Does not touch other
    // tets sharing that edge: the caller is responsible for ring conformity
    // (refine_conforming does this). Returns the two children, lower id first.
    std::pair<TetId, TetId> bisect(TetId t);

    // Refine one leaf, recursively pre-refining neighbors whose own refinement
    // edge differs, then splitting every leaf on the shared edge. Leaves the grid
    // conforming. Returns the ids of all new leaves.
    std::vector<TetId> refine_conforming(TetId t);

    // Leaf containing p (points on shared faces resolve to exactly one leaf,
    // deterministically). Throws OutsideGrid for p outside the closed unit cube.
    TetId locate_point(const Vec3& p) const;

    ValidationReport validate() const;

    MediaPayload& payload(TetId t) { return tets_[t].payload; }
    const MediaPayload& payload(TetId t) const { return tets_[t].payload; }

    std::optional<VertexId> find_vertex(std::uint32_t x, std::uint32_t y, std::uint32_t z) const;

    // leaves currently sharing edge (a,b), ascending; empty when unknown
    std::vector<TetId> edge_ring(VertexId a, VertexId b) const;
    std::size_t edge_map_size() const { return edge_map_.size(); }

private:
    struct FaceKey {
        std::array<std::uint32_t, 3> v;  // sorted
        bool operator==(const FaceKey& o) const { return v == o.v; }
    };
    struct FaceKeyHash {
        std::size_t operator()(const FaceKey& k) const;
    };
    struct VertexKeyHash {
        std::size_t operator()(const std::array<std::uint32_t, 3>& k) const;
    };
    struct FaceEntry {
        std::array<TetId, 2> tet{kNoTet, kNoTet};
        std::array<std::uint8_t, 2> slot{0, 0};
        int n = 0;
    };

    VertexId intern_vertex(std::uint32_t x, std::uint32_t y, std::uint32_t z);
    FaceKey face_key(TetId t, int slot) const;
    static std::uint64_t edge_key(VertexId a, VertexId b);
    void register_leaf(TetId t);    // face pairing + edge rings
    void unregister_leaf(TetId t);  // called right before splitting
    std::array<int, 2> refinement_edge_slots(TetId t) const;
    void refine_edge_recursive(VertexId a, VertexId b, std::vector<TetId>& new_leaves, int depth);
    void compute_normals(TetId t);

    std::vector<Vertex> verts_;
    std::vector<Tet> tets_;
    std::array<TetId, 24> roots_{};
    int max_level_ = kLevelCap;
    std::size_t leaf_count_ = 0;
    std::unordered_map<std::array<std::uint32_t, 3>, VertexId, VertexKeyHash> vert_lookup_;
    std::unordered_map<std::uint64_t, std::vector<TetId>, std::hash<std::uint64_t>> edge_map_;
    std::unordered_map<FaceKey, FaceEntry, FaceKeyHash> face_map_;
};

// Refine every current leaf `levels` times (each pass advances all leaves one level).
void refine_uniform(TetGrid& grid, int levels);

// Reference traversal oracle: clips the ray against every leaf independently
// (plane normals recomputed from vertex positions, not the stored table) and
// returns the hit segments sorted by entry distance.
std::vector<RaySegment> brute_force_segments(const TetGrid& grid, const Ray& ray);

// Same oracle with per-leaf planes precomputed once, for many-ray test loops.
class BruteForceTraverser {
public:
    explicit BruteForceTraverser(const TetGrid& grid);
    std::vector<RaySegment> segments(const Ray& ray) const;

private:
    struct LeafPlanes {
        TetId id;
        std::array<Vec3, 4> n;  // outward
        std::array<double, 4> d;  // plane offsets: inside iff dot(n,p) <= d
    };
    std::vector<LeafPlanes> leaves_;
};

}  // namespace tetvol
