#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tetvol/builder.hpp"
#include "tetvol/image.hpp"
#include "tetvol/tet_grid.hpp"
#include "tetvol/cli.hpp"
#include "tetvol/volume.hpp"

using namespace tetvol;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;

    json j() const { return json::parse(out); }
};

CliResult run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    CliResult r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "tetvol_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string tmp(const std::string& name) { return (work_dir() / name).string(); }

std::vector<char> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("cli gen: constant and step fields land in the voxels") {
    auto r = run_cli({"gen", "--kind", "constant", "--value", "0.5", "--dims", "4", "--out", tmp("const.dvol")});
    REQUIRE(r.code == 0);
    json j = r.j();
    CHECK(j["command"] == "gen");
    CHECK(j["dims"] == json({4, 4, 4}));
    CHECK(j["channels"] == json({"density"}));

    DenseVolume vol = DenseVolume::load_dvol(tmp("const.dvol"));
    for (float v : vol.channel("density")) CHECK(v == 0.5f);

    REQUIRE(run_cli({"gen", "--kind", "step", "--dims", "4", "--out", tmp("step.dvol")}).code == 0);
    DenseVolume step = DenseVolume::load_dvol(tmp("step.dvol"));
    const auto& d = step.channel("density");
    CHECK(d[step.index(0, 2, 1)] == 1.0f);  // voxel centers x < 0.5
    CHECK(d[step.index(1, 2, 1)] == 1.0f);
    CHECK(d[step.index(2, 2, 1)] == 0.0f);
    CHECK(d[step.index(3, 2, 1)] == 0.0f);
}

TEST_CASE("cli gen: optional channels and bad arguments") {
    auto r = run_cli({"gen", "--kind", "blob", "--dims", "3,4,5", "--out", tmp("chan.dvol"),
                      "--with-temperature", "--with-albedo", "0.25"});
    REQUIRE(r.code == 0);
    CHECK(r.j()["dims"] == json({3, 4, 5}));
    DenseVolume vol = DenseVolume::load_dvol(tmp("chan.dvol"));
    REQUIRE(vol.has_channel("temperature"));
    REQUIRE(vol.has_channel("albedo"));
    const auto& den = vol.channel("density");
    const auto& temp = vol.channel("temperature");
    for (std::size_t i = 0; i < den.size(); ++i) CHECK(temp[i] == std::min(std::max(den[i], 0.0f), 1.0f));
    for (float a : vol.channel("albedo")) CHECK(a == 0.25f);

    CHECK(run_cli({"gen", "--kind", "swirl", "--dims", "4", "--out", tmp("x.dvol")}).code == 2);
    CHECK(run_cli({"gen", "--kind", "blob", "--dims", "0", "--out", tmp("x.dvol")}).code == 2);
    auto bad = run_cli({"gen", "--kind", "blob", "--out", tmp("x.dvol"), "--dims", "4x4"});
    CHECK(bad.code == 2);
    CHECK_FALSE(bad.err.empty());
}

TEST_CASE("cli build: constant volume stays at the 24 roots and validates") {
    REQUIRE(run_cli({"gen", "--kind", "constant", "--value", "1", "--dims", "8", "--out", tmp("c8.dvol")}).code == 0);
    auto r = run_cli({"build", "--volume", tmp("c8.dvol"), "--out", tmp("c8.tgrid")});
    REQUIRE(r.code == 0);
    json j = r.j();
    CHECK(j["leafCount"] == 24);
    CHECK(j["criterionSplits"] == 0);

    TetGrid grid = load_grid(tmp("c8.tgrid"));
    CHECK(grid.validate().ok);

    auto s = run_cli({"stats", "--grid", tmp("c8.tgrid")});
    REQUIRE(s.code == 0);
    CHECK(s.j()["leafCount"] == 24);
}

TEST_CASE("cli config file: values apply, flags win, bad input is a usage error") {
    REQUIRE(run_cli({"gen", "--kind", "constant", "--value", "0", "--dims", "2", "--out", tmp("vac.dvol")}).code == 0);

    {
        std::ofstream f(tmp("render.cfg"));
        f << "# test config\n[camera]\nwidth = 6\nheight = 4\n\n[render]\nspp = 7\nseed = 42\n";
    }
    auto r = run_cli({"render", "--volume", tmp("vac.dvol"), "--config", tmp("render.cfg")});
    REQUIRE(r.code == 0);
    CHECK(r.j()["spp"] == 7);
    CHECK(r.j()["seed"] == 42);
    CHECK(r.j()["width"] == 6);

    auto o = run_cli({"render", "--volume", tmp("vac.dvol"), "--config", tmp("render.cfg"), "--spp", "9"});
    REQUIRE(o.code == 0);
    CHECK(o.j()["spp"] == 9);   // flag beats file
    CHECK(o.j()["seed"] == 42); // file beats default

    {
        std::ofstream f(tmp("bad.cfg"));
        f << "[render]\nsppp = 7\n";
    }
    auto bad = run_cli({"render", "--volume", tmp("vac.dvol"), "--config", tmp("bad.cfg")});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("sppp") != std::string::npos);

    {
        std::ofstream f(tmp("conflict.cfg"));
        f << "[camera]\nlook_at = 0.5,0.5,0.5\nforward = 0,0,1\n";
    }
    CHECK(run_cli({"render", "--volume", tmp("vac.dvol"), "--config", tmp("conflict.cfg")}).code == 2);
}

TEST_CASE("cli render: vacuum gives the environment, same seed gives identical bytes") {
    REQUIRE(run_cli({"gen", "--kind", "constant", "--value", "0", "--dims", "2", "--out", tmp("v.dvol")}).code == 0);
    auto r = run_cli({"render", "--volume", tmp("v.dvol"), "--pfm", tmp("vac.pfm"), "--width", "6", "--height", "4",
                      "--spp", "2"});
    REQUIRE(r.code == 0);
    CHECK(r.j()["mode"] == "tet");
    FloatImage img = read_pfm(tmp("vac.pfm"));
    REQUIRE(img.width == 6);
    REQUIRE(img.height == 4);
    for (float v : img.rgb) CHECK(v == 1.0f);  // default environment

    REQUIRE(run_cli({"gen", "--kind", "blob", "--dims", "8", "--out", tmp("b8.dvol")}).code == 0);
    std::vector<std::string> base{"render", "--volume", tmp("b8.dvol"), "--width", "8", "--height", "6",
                                  "--spp", "2", "--density-scale", "8", "--seed", "3"};
    auto one = base, two = base, other = base;
    one.insert(one.end(), {"--pfm", tmp("r1.pfm")});
    two.insert(two.end(), {"--pfm", tmp("r2.pfm")});
    other.back() = "4";
    other.insert(other.end(), {"--pfm", tmp("r3.pfm")});
    REQUIRE(run_cli(one).code == 0);
    REQUIRE(run_cli(two).code == 0);
    REQUIRE(run_cli(other).code == 0);
    CHECK(slurp(tmp("r1.pfm")) == slurp(tmp("r2.pfm")));
    CHECK(slurp(tmp("r1.pfm")) != slurp(tmp("r3.pfm")));
}

TEST_CASE("cli render: reference mode and argument validation") {
    REQUIRE(run_cli({"gen", "--kind", "blob", "--dims", "8", "--out", tmp("ref.dvol")}).code == 0);
    auto r = run_cli({"render", "--volume", tmp("ref.dvol"), "--reference", "--width", "4", "--height", "4",
                      "--spp", "1"});
    REQUIRE(r.code == 0);
    CHECK(r.j()["mode"] == "reference");
    CHECK(r.j()["cellCount"] == 512);

    CHECK(run_cli({"render", "--width", "4"}).code == 2);                              // no input at all
    CHECK(run_cli({"render", "--reference", "--grid", tmp("nope.tgrid")}).code == 2);  // reference needs --volume
    CHECK(run_cli({"render", "--grid", tmp("a.tgrid"), "--volume", tmp("b.dvol")}).code == 2);
    CHECK(run_cli({"frobnicate"}).code == 2);
}

TEST_CASE("cli compare: identical images, then a dimension mismatch") {
    REQUIRE(run_cli({"gen", "--kind", "blob", "--dims", "8", "--out", tmp("cmp.dvol")}).code == 0);
    REQUIRE(run_cli({"render", "--volume", tmp("cmp.dvol"), "--pfm", tmp("a.pfm"), "--var-pfm", tmp("a_var.pfm"),
                     "--stats-out", tmp("a.json"), "--width", "8", "--height", "8", "--spp", "4",
                     "--density-scale", "8"})
                .code == 0);

    auto same = run_cli({"compare", "--image-a", tmp("a.pfm"), "--image-b", tmp("a.pfm"), "--stats-a", tmp("a.json"),
                         "--stats-b", tmp("a.json"), "--var-a", tmp("a_var.pfm"), "--var-b", tmp("a_var.pfm")});
    REQUIRE(same.code == 0);
    json j = same.j();
    CHECK(j["rmse"] == 0.0);
    CHECK(j["maxAbsDiff"] == 0.0);
    CHECK(j["outlierFraction"] == 0.0);
    CHECK(j["speedup"] == 1.0);
    CHECK(j["cellCountRatio"] == 1.0);

    auto no_var = run_cli({"compare", "--image-a", tmp("a.pfm"), "--image-b", tmp("a.pfm"), "--stats-a", tmp("a.json"),
                           "--stats-b", tmp("a.json")});
    REQUIRE(no_var.code == 0);
    CHECK(no_var.j()["outlierFraction"].is_null());

    REQUIRE(run_cli({"render", "--volume", tmp("cmp.dvol"), "--pfm", tmp("small.pfm"), "--stats-out",
                     tmp("small.json"), "--width", "4", "--height", "4", "--spp", "1"})
                .code == 0);
    CHECK(run_cli({"compare", "--image-a", tmp("a.pfm"), "--image-b", tmp("small.pfm"), "--stats-a", tmp("a.json"),
                   "--stats-b", tmp("small.json")})
              .code == 1);
}

TEST_CASE("cli validate: clean grid passes, corrupted neighbor bytes fail") {
    REQUIRE(run_cli({"gen", "--kind", "step", "--dims", "8", "--out", tmp("val.dvol")}).code == 0);
    REQUIRE(run_cli({"build", "--volume", tmp("val.dvol"), "--out", tmp("val.tgrid"), "--max-level", "4"}).code == 0);

    auto ok = run_cli({"validate", "--grid", tmp("val.tgrid"), "--rays", "20"});
    CHECK(ok.code == 0);
    CHECK(ok.j()["ok"] == true);
    CHECK(ok.j()["rayFailures"] == 0);
    CHECK(ok.err.find("grid OK") != std::string::npos);

    // flip one stored neighbor link to "none": reciprocity must catch it
    auto bytes = slurp(tmp("val.tgrid"));
    auto u64_at = [&](std::size_t off) {
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[off + b])) << (8 * b);
        return v;
    };
    std::size_t nv = u64_at(8);
    std::size_t nt = u64_at(16 + 12 * nv);
    std::size_t records = 24 + 12 * nv;  // past magic, version, vertex table, tet count
    bool patched = false;
    for (std::size_t r2 = 0; r2 < nt && !patched; ++r2) {
        std::size_t rec = records + 90 * r2;
        for (int slot = 0; slot < 4 && !patched; ++slot) {
            std::size_t off = rec + 41 + 8 * static_cast<std::size_t>(slot);
            if (u64_at(off) == ~0ull) continue;
            for (int b = 0; b < 8; ++b) bytes[off + b] = static_cast<char>(0xFF);
            patched = true;
        }
    }
    REQUIRE(patched);
    std::ofstream(tmp("bad.tgrid"), std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));

    auto bad = run_cli({"validate", "--grid", tmp("bad.tgrid"), "--rays", "5"});
    CHECK(bad.code == 1);
    CHECK(bad.j()["ok"] == false);
    CHECK(bad.err.find("INVALID") != std::string::npos);

    CHECK(run_cli({"validate", "--grid", tmp("missing.tgrid")}).code == 1);
}

TEST_CASE("cli stats: volume summary") {
    REQUIRE(run_cli({"gen", "--kind", "ramp", "--dims", "4", "--out", tmp("ramp.dvol")}).code == 0);
    auto r = run_cli({"stats", "--volume", tmp("ramp.dvol")});
    REQUIRE(r.code == 0);
    json j = r.j();
    CHECK(j["kind"] == "volume");
    CHECK(j["dims"] == json({4, 4, 4}));
    REQUIRE(j["channels"].size() == 1);
    const json& den = j["channels"][0];
    CHECK(den["name"] == "density");
    CHECK(den["min"] == doctest::Approx(0.125));
    CHECK(den["max"] == doctest::Approx(0.875));
    CHECK(den["mean"] == doctest::Approx(0.5));

    CHECK(run_cli({"stats"}).code == 2);
}
