#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include "tetvol/builder.hpp"
#include "tetvol/camera.hpp"
#include "tetvol/errors.hpp"
#include "tetvol/tet_grid.hpp"
#include "tetvol/volume.hpp"

using namespace tetvol;

namespace {

std::filesystem::path tmp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "tetvol_unit";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

DenseVolume make_volume(int n, double (*field)(const Vec3&)) {
    DenseVolume v(n, n, n);
    auto& d = v.channel("density");
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) d[v.index(i, j, k)] = static_cast<float>(field(v.voxel_center(i, j, k)));
    return v;
}

double field_constant(const Vec3&) { return 1.0; }
double field_ramp(const Vec3& p) { return p.x; }
double field_step(const Vec3& p) { return p.x < 0.5 ? 1.0 : 0.0; }
double field_blob(const Vec3& p) {
    Vec3 d = p - Vec3{0.5, 0.5, 0.5};
    double t = std::max(0.0, 1.0 - length_sq(d) / (0.45 * 0.45));
    return t * t;
}

}  // namespace

TEST_CASE("build: constant volume stays at the 24 roots, payload scaled") {
    DenseVolume vol = make_volume(8, field_constant);
    BuildConfig cfg;
    cfg.variation_threshold = 0.1;
    cfg.max_level = 10;
    cfg.density_scale = 2.5;
    BuildStats stats;
    TetGrid g = build_adaptive_grid(vol, cfg, nullptr, &stats);

    CHECK(g.leaf_count() == 24);
    CHECK(stats.leaf_count == 24);
    CHECK(stats.criterion_splits == 0);
    CHECK(stats.max_depth == 0);
    for (TetId t : g.leaf_ids()) {
        CHECK(g.payload(t).density == 2.5f);
        CHECK(g.payload(t).present());
        CHECK_FALSE(g.payload(t).has_temperature());
    }
    CHECK(g.validate().ok);
}

TEST_CASE("build: step volume refines only at the discontinuity") {
    DenseVolume vol = make_volume(16, field_step);
    BuildConfig cfg;
    cfg.variation_threshold = 0.5;
    cfg.max_level = 6;
    BuildStats stats;
    TetGrid g = build_adaptive_grid(vol, cfg, nullptr, &stats);

    CHECK(g.leaf_count() > 24);
    CHECK(g.leaf_count() < 24u << 6);  // far from uniform refinement
    CHECK(g.validate().ok);

    // every criterion-driven split straddles the x = 0.5 interface
    REQUIRE(!stats.criterion_split_ids.empty());
    for (TetId t : stats.criterion_split_ids) {
        auto c = g.tet_corners(t);
        double mn = 1e300, mx = -1e300;
        for (const Vec3& p : c) {
            mn = std::min(mn, p.x);
            mx = std::max(mx, p.x);
        }
        CHECK(mn < 0.5 + 1e-12);
        CHECK(mx > 0.5 - 1e-12);
    }
}

TEST_CASE("build: lowering the threshold never removes leaves") {
    DenseVolume vol = make_volume(16, field_blob);
    BuildConfig lo, hi;
    lo.variation_threshold = 0.3;
    hi.variation_threshold = 0.6;
    lo.max_level = hi.max_level = 5;
    TetGrid a = build_adaptive_grid(vol, lo);
    TetGrid b = build_adaptive_grid(vol, hi);
    CHECK(a.leaf_count() >= b.leaf_count());
    CHECK(b.leaf_count() >= 24);
}

TEST_CASE("build: identical inputs give byte-identical grids") {
    DenseVolume vol = make_volume(8, field_blob);
    BuildConfig cfg;
    cfg.variation_threshold = 0.25;
    cfg.max_level = 5;
    TetGrid a = build_adaptive_grid(vol, cfg);
    TetGrid b = build_adaptive_grid(vol, cfg);
    auto pa = tmp_path("det_a.tgrid"), pb = tmp_path("det_b.tgrid");
    save_grid(a, pa.string());
    save_grid(b, pb.string());
    CHECK(file_bytes(pa) == file_bytes(pb));
}

TEST_CASE("ownership stats: children partition the parent's voxel centers") {
    DenseVolume vol = make_volume(8, field_ramp);
    TetGrid g = TetGrid::init_roots();
    for (int round = 0; round < 3; ++round) {
        TetId leaf = g.leaf_ids()[round * 5 % g.leaf_count()];
        DensityStats parent = density_stats_in_tet(vol, g, leaf);
        g.refine_conforming(leaf);

        std::vector<TetId> kids;
        for (TetId t = 0; t < g.tet_count(); ++t)
            if (g.tet(t).parent == leaf) kids.push_back(t);
        REQUIRE(kids.size() == 2);
        DensityStats a = density_stats_in_tet(vol, g, kids[0]);
        DensityStats b = density_stats_in_tet(vol, g, kids[1]);

        CHECK(a.count + b.count == parent.count);
        if (parent.count > 0) {
            double parent_sum = parent.mean * static_cast<double>(parent.count);
            double child_sum = (a.count ? a.mean * static_cast<double>(a.count) : 0.0) +
                               (b.count ? b.mean * static_cast<double>(b.count) : 0.0);
            CHECK(child_sum == doctest::Approx(parent_sum).epsilon(1e-12));
        }
    }
}

TEST_CASE("assign_payloads: leaf densities match an independent locate_point aggregation") {
    DenseVolume vol = make_volume(8, field_blob);
    BuildConfig cfg;
    cfg.variation_threshold = 0.2;
    cfg.max_level = 4;
    cfg.density_scale = 1.5;
    TetGrid g = build_adaptive_grid(vol, cfg);

    std::map<TetId, std::pair<double, std::size_t>> agg;  // leaf -> (sum, count)
    const auto& d = vol.channel("density");
    for (int k = 0; k < vol.nz(); ++k)
        for (int j = 0; j < vol.ny(); ++j)
            for (int i = 0; i < vol.nx(); ++i) {
                TetId leaf = g.locate_point(vol.voxel_center(i, j, k));
                agg[leaf].first += d[vol.index(i, j, k)];
                agg[leaf].second += 1;
            }

    for (TetId t : g.leaf_ids()) {
        REQUIRE(g.payload(t).present());
        auto it = agg.find(t);
        if (it != agg.end()) {
            float want = static_cast<float>(1.5 * (it->second.first / static_cast<double>(it->second.second)));
            CHECK(g.payload(t).density == want);
        } else {
            float want = static_cast<float>(1.5 * vol.trilinear_sample(g.tet_centroid(t), "density"));
            CHECK(g.payload(t).density == want);
        }
    }
}

TEST_CASE("assign_payloads: optional channels set mask bits and means") {
    DenseVolume vol = make_volume(4, field_constant);
    auto& temp = vol.add_channel("temperature");
    std::fill(temp.begin(), temp.end(), 0.25f);
    auto& alb = vol.add_channel("albedo");
    std::fill(alb.begin(), alb.end(), 0.5f);

    BuildConfig cfg;
    TetGrid g = build_adaptive_grid(vol, cfg);
    for (TetId t : g.leaf_ids()) {
        CHECK(g.payload(t).has_temperature());
        CHECK(g.payload(t).has_albedo());
        CHECK(g.payload(t).temperature == 0.25f);
        CHECK(g.payload(t).albedo == 0.5f);
    }
}

TEST_CASE("tgrid: round trip is byte-identical and revalidates") {
    DenseVolume vol = make_volume(8, field_step);
    BuildConfig cfg;
    cfg.variation_threshold = 0.5;
    cfg.max_level = 5;
    TetGrid g = build_adaptive_grid(vol, cfg);

    auto p1 = tmp_path("grid1.tgrid"), p2 = tmp_path("grid2.tgrid");
    save_grid(g, p1.string());
    TetGrid h = load_grid(p1.string());
    CHECK(h.leaf_count() == g.leaf_count());
    CHECK(h.tet_count() == g.tet_count());
    CHECK(h.vertex_count() == g.vertex_count());
    auto rep = h.validate();
    INFO(rep.first_violation);
    CHECK(rep.ok);
    for (TetId t = 0; t < g.tet_count(); ++t) {
        CHECK(h.tet(t).verts == g.tet(t).verts);
        CHECK(h.tet(t).neighbors == g.tet(t).neighbors);
        CHECK(h.tet(t).payload.density == g.tet(t).payload.density);
        CHECK(h.tet(t).payload.mask == g.tet(t).payload.mask);
    }
    save_grid(h, p2.string());
    CHECK(file_bytes(p1) == file_bytes(p2));
}

TEST_CASE("tgrid: malformed files are rejected") {
    DenseVolume vol = make_volume(4, field_constant);
    TetGrid g = build_adaptive_grid(vol, BuildConfig{});
    auto good = tmp_path("ok.tgrid");
    save_grid(g, good.string());
    auto bytes = file_bytes(good);

    auto bad_magic = tmp_path("bad_magic.tgrid");
    {
        auto b = bytes;
        b[0] = 'X';
        std::ofstream f(bad_magic, std::ios::binary);
        f.write(b.data(), static_cast<std::streamsize>(b.size()));
    }
    CHECK_THROWS_AS(load_grid(bad_magic.string()), FormatError);

    auto truncated = tmp_path("trunc.tgrid");
    {
        std::ofstream f(truncated, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_grid(truncated.string()), FormatError);

    CHECK_THROWS_AS(load_grid(tmp_path("missing.tgrid").string()), IoError);
}

TEST_CASE("build config: invalid settings are rejected") {
    DenseVolume vol = make_volume(4, field_constant);
    BuildConfig bad;
    bad.variation_threshold = -0.5;
    CHECK_THROWS_AS(build_adaptive_grid(vol, bad), ConfigError);
    bad = BuildConfig{};
    bad.pixel_threshold = 0.0;
    CHECK_THROWS_AS(build_adaptive_grid(vol, bad), ConfigError);
    bad = BuildConfig{};
    bad.max_level = 99;
    CHECK_THROWS_AS(build_adaptive_grid(vol, bad), ConfigError);
    bad = BuildConfig{};
    bad.use_camera = true;  // no camera supplied
    CHECK_THROWS_AS(build_adaptive_grid(vol, bad), ConfigError);
}

TEST_CASE("build with camera: culled tets never trigger criterion splits") {
    DenseVolume vol = make_volume(16, field_step);
    PinholeCamera cam({0.25, 0.5, -1.5}, {0, 0, 1}, {0, 1, 0}, 25, 64, 64);

    BuildConfig cfg;
    cfg.variation_threshold = 0.5;
    cfg.max_level = 6;
    cfg.use_camera = true;
    BuildStats stats;
    TetGrid with_cam = build_adaptive_grid(vol, cfg, &cam, &stats);
    CHECK(with_cam.validate().ok);
    for (TetId t : stats.criterion_split_ids) CHECK_FALSE(cam.tet_outside_frustum(with_cam.tet_corners(t)));

    cfg.use_camera = false;
    TetGrid without = build_adaptive_grid(vol, cfg);
    CHECK(without.leaf_count() >= with_cam.leaf_count());
}
