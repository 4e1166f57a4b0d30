#include "tetvol/builder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>

namespace tetvol {

void BuildConfig::validate() const {
    if (!(variation_threshold >= 0.0)) throw ConfigError("variationThreshold must be >= 0");
    if (max_level < 0 || max_level > kLevelCap) throw ConfigError("maxLevel out of range");
    if (!(pixel_threshold > 0.0)) throw ConfigError("pixelThreshold must be > 0");
    if (!(density_scale >= 0.0)) throw ConfigError("densityScale must be >= 0");
}

namespace {

// Does this voxel center belong to the leaf? Fast plane tests with a margin;
// centers in the boundary band are resolved by locate_point so every center
// has exactly one owner.
bool owns_center(const TetGrid& grid, TetId leaf, const TetPlanes& planes, const Vec3& c) {
    constexpr double kBand = 1e-9;
    if (planes.strictly_outside(c, kBand)) return false;
    if (planes.strictly_inside(c, kBand)) return true;
    return grid.locate_point(c) == leaf;
}

struct LeafAggregate {
    DensityStats density;
    double temperature_mean = 0.0;
    double albedo_mean = 0.0;
};

LeafAggregate aggregate_leaf(const DenseVolume& vol, const TetGrid& grid, TetId leaf,
                             const std::vector<float>* temp, const std::vector<float>* alb) {
    const auto corners = grid.tet_corners(leaf);
    const TetPlanes planes(corners);
    Vec3 lo = corners[0], hi = corners[0];
    for (int i = 1; i < 4; ++i) {
        lo = {std::min(lo.x, corners[i].x), std::min(lo.y, corners[i].y), std::min(lo.z, corners[i].z)};
        hi = {std::max(hi.x, corners[i].x), std::max(hi.y, corners[i].y), std::max(hi.z, corners[i].z)};
    }
    const CenterRange r = centers_in_aabb(vol, lo, hi);
    const std::vector<float>& density = vol.channel("density");

    LeafAggregate agg;
    agg.density.min = std::numeric_limits<double>::infinity();
    agg.density.max = -std::numeric_limits<double>::infinity();
    double dsum = 0.0, tsum = 0.0, asum = 0.0;
    for (int k = r.lo[2]; k <= r.hi[2]; ++k)
        for (int j = r.lo[1]; j <= r.hi[1]; ++j)
            for (int i = r.lo[0]; i <= r.hi[0]; ++i) {
                if (!owns_center(grid, leaf, planes, vol.voxel_center(i, j, k))) continue;
                const std::size_t idx = vol.index(i, j, k);
                const double v = density[idx];
                agg.density.min = std::min(agg.density.min, v);
                agg.density.max = std::max(agg.density.max, v);
                dsum += v;
                if (temp) tsum += (*temp)[idx];
                if (alb) asum += (*alb)[idx];
                ++agg.density.count;
            }
    if (agg.density.count == 0) {
        const Vec3 centroid = (corners[0] + corners[1] + corners[2] + corners[3]) * 0.25;
        const double v = vol.trilinear_sample(centroid, density);
        agg.density.min = agg.density.max = agg.density.mean = v;
        if (temp) agg.temperature_mean = vol.trilinear_sample(centroid, *temp);
        if (alb) agg.albedo_mean = vol.trilinear_sample(centroid, *alb);
    } else {
        const double n = static_cast<double>(agg.density.count);
        agg.density.mean = dsum / n;
        if (temp) agg.temperature_mean = tsum / n;
        if (alb) agg.albedo_mean = asum / n;
    }
    return agg;
}

}  // namespace

DensityStats density_stats_in_tet(const DenseVolume& vol, const TetGrid& grid, TetId leaf,
                                  const std::string& channel) {
    const auto corners = grid.tet_corners(leaf);
    const TetPlanes planes(corners);
    Vec3 lo = corners[0], hi = corners[0];
    for (int i = 1; i < 4; ++i) {
        lo = {std::min(lo.x, corners[i].x), std::min(lo.y, corners[i].y), std::min(lo.z, corners[i].z)};
        hi = {std::max(hi.x, corners[i].x), std::max(hi.y, corners[i].y), std::max(hi.z, corners[i].z)};
    }
    const CenterRange r = centers_in_aabb(vol, lo, hi);
    const std::vector<float>& data = vol.channel(channel);

    DensityStats s;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (int k = r.lo[2]; k <= r.hi[2]; ++k)
        for (int j = r.lo[1]; j <= r.hi[1]; ++j)
            for (int i = r.lo[0]; i <= r.hi[0]; ++i) {
                if (!owns_center(grid, leaf, planes, vol.voxel_center(i, j, k))) continue;
                const double v = data[vol.index(i, j, k)];
                s.min = std::min(s.min, v);
                s.max = std::max(s.max, v);
                sum += v;
                ++s.count;
            }
    if (s.count == 0) {
        const Vec3 centroid = (corners[0] + corners[1] + corners[2] + corners[3]) * 0.25;
        s.min = s.max = s.mean = vol.trilinear_sample(centroid, data);
    } else {
        s.mean = sum / static_cast<double>(s.count);
    }
    return s;
}

TetGrid build_adaptive_grid(const DenseVolume& vol, const BuildConfig& cfg, const PinholeCamera* camera,
                            BuildStats* stats) {
    cfg.validate();
    if (cfg.use_camera && camera == nullptr) throw ConfigError("useCamera set but no camera given");
    const auto t_begin = std::chrono::steady_clock::now();

    TetGrid grid = TetGrid::init_roots(std::max(cfg.max_level, 1));
    BuildStats local;
    BuildStats& st = stats ? *stats : local;

    using Item = std::pair<int, TetId>;  // (level, id), ascending
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> work;
    for (TetId r : grid.roots()) work.emplace(0, r);

    while (!work.empty()) {
        const auto [level, id] = work.top();
        work.pop();
        if (!grid.tet(id).is_leaf()) continue;  // already split by propagation

        const DensityStats ds = density_stats_in_tet(vol, grid, id);
        if (!(variation_metric(ds) > cfg.variation_threshold)) continue;
        if (level >= cfg.max_level) continue;
        if (cfg.use_camera) {
            const auto corners = grid.tet_corners(id);
            if (camera->tet_outside_frustum(corners)) continue;
            if (!(camera->projected_size_pixels(corners) > cfg.pixel_threshold)) continue;
        }

        const std::size_t before = grid.tet_count();
        const std::vector<TetId> fresh = grid.refine_conforming(id);
        const std::size_t bisections = (grid.tet_count() - before) / 2;
        ++st.criterion_splits;
        st.criterion_split_ids.push_back(id);
        st.propagation_splits += bisections - 1;
        for (TetId f : fresh) work.emplace(grid.tet(f).level, f);
    }

    assign_payloads(grid, vol, cfg);

    st.leaf_count = grid.leaf_count();
    st.max_depth = 0;
    for (TetId t : grid.leaf_ids()) st.max_depth = std::max(st.max_depth, static_cast<int>(grid.tet(t).level));
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return grid;
}

void assign_payloads(TetGrid& grid, const DenseVolume& vol, const BuildConfig& cfg) {
    cfg.validate();
    const std::vector<float>* temp = vol.has_channel("temperature") ? &vol.channel("temperature") : nullptr;
    const std::vector<float>* alb = vol.has_channel("albedo") ? &vol.channel("albedo") : nullptr;
    for (TetId t : grid.leaf_ids()) {
        const LeafAggregate agg = aggregate_leaf(vol, grid, t, temp, alb);
        MediaPayload& p = grid.payload(t);
        p.density = static_cast<float>(cfg.density_scale * agg.density.mean);
        p.mask = 1;
        if (temp) {
            p.temperature = static_cast<float>(agg.temperature_mean);
            p.mask |= 2;
        }
        if (alb) {
            p.albedo = static_cast<float>(std::clamp(agg.albedo_mean, 0.0, 1.0));
            p.mask |= 4;
        }
    }
}

namespace {

constexpr std::uint64_t kSentinel = 0xffffffffffffffffull;

template <class T>
void put(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw FormatError("unexpected end of grid file");
    return v;
}

std::uint64_t id_out(TetId id) { return id == kNoTet ? kSentinel : static_cast<std::uint64_t>(id); }

TetId id_in(std::uint64_t v) {
    if (v == kSentinel) return kNoTet;
    if (v >= kNoTet) throw FormatError("tet id out of range");
    return static_cast<TetId>(v);
}

}  // namespace

void save_grid(const TetGrid& grid, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write("TGRD", 4);
    put<std::uint32_t>(f, 1u);
    put<std::uint64_t>(f, grid.vertex_count());
    for (const Vertex& v : grid.vertices()) {
        put<std::uint32_t>(f, v.q[0]);
        put<std::uint32_t>(f, v.q[1]);
        put<std::uint32_t>(f, v.q[2]);
    }
    put<std::uint64_t>(f, grid.tet_count());
    for (const Tet& t : grid.tets()) {
        for (VertexId v : t.verts) put<std::uint32_t>(f, v);
        put<std::uint8_t>(f, t.level);
        put<std::uint64_t>(f, id_out(t.children[0]));
        put<std::uint64_t>(f, id_out(t.children[1]));
        put<std::uint64_t>(f, id_out(t.parent));
        for (TetId n : t.neighbors) put<std::uint64_t>(f, id_out(n));
        for (std::uint8_t n : t.normal_ids) put<std::uint8_t>(f, n);
        put<std::uint8_t>(f, t.payload.mask);
        put<float>(f, t.payload.density);
        put<float>(f, t.payload.temperature);
        put<float>(f, t.payload.albedo);
    }
    for (TetId r : grid.roots()) put<std::uint64_t>(f, id_out(r));
    if (!f) throw IoError("write failed: " + path);
}

TetGrid load_grid(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "TGRD", 4) != 0) throw FormatError("not a TGRD file: " + path);
    if (get<std::uint32_t>(f) != 1u) throw FormatError("unsupported TGRD version");

    const std::uint64_t n_verts = get<std::uint64_t>(f);
    if (n_verts < 8 || n_verts > (1ull << 32)) throw FormatError("bad vertex count");
    std::vector<Vertex> verts(n_verts);
    for (Vertex& v : verts) {
        v.q[0] = get<std::uint32_t>(f);
        v.q[1] = get<std::uint32_t>(f);
        v.q[2] = get<std::uint32_t>(f);
        if (v.q[0] > kCoordOne || v.q[1] > kCoordOne || v.q[2] > kCoordOne)
            throw FormatError("vertex coordinate out of range");
    }

    const std::uint64_t n_tets = get<std::uint64_t>(f);
    if (n_tets < 24 || n_tets > (1ull << 32)) throw FormatError("bad tet count");
    std::vector<Tet> tets(n_tets);
    for (Tet& t : tets) {
        for (VertexId& v : t.verts) {
            v = get<std::uint32_t>(f);
            if (v >= n_verts) throw FormatError("vertex id out of range");
        }
        t.level = get<std::uint8_t>(f);
        t.children[0] = id_in(get<std::uint64_t>(f));
        t.children[1] = id_in(get<std::uint64_t>(f));
        t.parent = id_in(get<std::uint64_t>(f));
        for (TetId& n : t.neighbors) n = id_in(get<std::uint64_t>(f));
        for (std::uint8_t& n : t.normal_ids) {
            n = get<std::uint8_t>(f);
            if (n >= 18) throw FormatError("face normal id out of range");
        }
        t.payload.mask = get<std::uint8_t>(f);
        t.payload.density = get<float>(f);
        t.payload.temperature = get<float>(f);
        t.payload.albedo = get<float>(f);
        for (TetId c : t.children)
            if (c != kNoTet && c >= n_tets) throw FormatError("child id out of range");
        if (t.parent != kNoTet && t.parent >= n_tets) throw FormatError("parent id out of range");
        for (TetId n : t.neighbors)
            if (n != kNoTet && n >= n_tets) throw FormatError("neighbor id out of range");
    }

    std::array<TetId, 24> roots{};
    for (TetId& r : roots) {
        r = id_in(get<std::uint64_t>(f));
        if (r == kNoTet || r >= n_tets) throw FormatError("root id out of range");
    }
    return TetGrid::assemble(std::move(verts), std::move(tets), roots, kLevelCap);
}

}  // namespace tetvol
