#include "tetvol/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tetvol/builder.hpp"
#include "tetvol/camera.hpp"
#include "tetvol/errors.hpp"
#include "tetvol/geometry.hpp"
#include "tetvol/image.hpp"
#include "tetvol/regular_grid.hpp"
#include "tetvol/rng.hpp"
#include "tetvol/tet_grid.hpp"
#include "tetvol/tracer.hpp"
#include "tetvol/volume.hpp"

namespace tetvol::cli {
namespace {

using nlohmann::json;

// ---- value parsing -------------------------------------------------------

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(cur), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing garbage");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(what + ": not a number: '" + s + "'");
    }
}

long long parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing garbage");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(what + ": not an integer: '" + s + "'");
    }
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing garbage");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(what + ": not an unsigned integer: '" + s + "'");
    }
}

bool parse_bool(const std::string& s, const std::string& what) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(what + ": not a boolean: '" + s + "'");
}

Vec3 parse_vec3(const std::string& s, const std::string& what) {
    auto f = split_fields(s);
    if (f.size() != 3) throw ConfigError(what + ": expected 3 components, got '" + s + "'");
    return {parse_double(f[0], what), parse_double(f[1], what), parse_double(f[2], what)};
}

// "64" or "64,32,16" or "64x32x16"
std::array<int, 3> parse_dims(const std::string& s) {
    std::string norm = s;
    std::replace(norm.begin(), norm.end(), 'x', ',');
    std::replace(norm.begin(), norm.end(), 'X', ',');
    auto f = split_fields(norm);
    if (f.size() == 1) {
        int n = static_cast<int>(parse_int(f[0], "dims"));
        return {n, n, n};
    }
    if (f.size() == 3)
        return {static_cast<int>(parse_int(f[0], "dims")), static_cast<int>(parse_int(f[1], "dims")),
                static_cast<int>(parse_int(f[2], "dims"))};
    throw ConfigError("dims: expected N or NX,NY,NZ, got '" + s + "'");
}

// ---- settings: defaults <- config file <- command-line flags --------------

struct CameraSettings {
    Vec3 position{0.5, 0.5, -2.0};
    std::optional<Vec3> look_at;
    std::optional<Vec3> forward;
    Vec3 up{0.0, 1.0, 0.0};
    double vfov = 45.0;
    int width = 256;
    int height = 256;

    PinholeCamera make() const {
        if (look_at && forward) throw ConfigError("camera: set look_at or forward, not both");
        Vec3 fwd;
        if (forward) {
            fwd = *forward;
        } else {
            Vec3 target = look_at ? *look_at : Vec3{0.5, 0.5, 0.5};
            fwd = target - position;
        }
        return PinholeCamera(position, fwd, up, vfov, width, height);
    }
};

struct Settings {
    CameraSettings camera;
    BuildConfig build;
    RenderConfig render;
    int threads = 0;  // 0 = hardware concurrency
};

void apply_setting(Settings& s, const std::string& section, const std::string& key, const std::string& value) {
    const std::string what = section + "." + key;
    if (section == "camera") {
        if (key == "position") s.camera.position = parse_vec3(value, what);
        else if (key == "look_at") s.camera.look_at = parse_vec3(value, what);
        else if (key == "forward") s.camera.forward = parse_vec3(value, what);
        else if (key == "up") s.camera.up = parse_vec3(value, what);
        else if (key == "vfov") s.camera.vfov = parse_double(value, what);
        else if (key == "width") s.camera.width = static_cast<int>(parse_int(value, what));
        else if (key == "height") s.camera.height = static_cast<int>(parse_int(value, what));
        else throw ConfigError("config: unknown key '" + what + "'");
    } else if (section == "build") {
        if (key == "threshold") s.build.variation_threshold = parse_double(value, what);
        else if (key == "max_level") s.build.max_level = static_cast<int>(parse_int(value, what));
        else if (key == "use_camera") s.build.use_camera = parse_bool(value, what);
        else if (key == "pixel_threshold") s.build.pixel_threshold = parse_double(value, what);
        else if (key == "density_scale") s.build.density_scale = parse_double(value, what);
        else throw ConfigError("config: unknown key '" + what + "'");
    } else if (section == "render") {
        if (key == "spp") s.render.spp = static_cast<int>(parse_int(value, what));
        else if (key == "max_bounces") s.render.max_bounces = static_cast<int>(parse_int(value, what));
        else if (key == "seed") s.render.seed = parse_u64(value, what);
        else if (key == "g") s.render.hg_g = parse_double(value, what);
        else if (key == "albedo") s.render.default_albedo = parse_double(value, what);
        else if (key == "environment") s.render.environment = parse_vec3(value, what);
        else if (key == "emission_scale") s.render.emission_scale = parse_double(value, what);
        else if (key == "exposure") s.render.exposure = parse_double(value, what);
        else if (key == "gamma") s.render.gamma = parse_double(value, what);
        else if (key == "threads") s.threads = static_cast<int>(parse_int(value, what));
        else throw ConfigError("config: unknown key '" + what + "'");
    } else {
        throw ConfigError("config: unknown section '[" + section + "]'");
    }
}

// Plain UTF-8 "[section]" + "key = value" text; '#' starts a comment.
void load_config_file(const std::string& path, Settings& s) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open '" + path + "'");
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config: bad section header at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config: expected key = value at line " + std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config: empty key or value at line " + std::to_string(lineno));
        if (section.empty()) throw ConfigError("config: key '" + key + "' before any [section]");
        apply_setting(s, section, key, value);
    }
}

// Flag values land here first; only flags the user actually passed override the
// config file.
struct Overrides {
    std::optional<std::string> position, look_at, forward, up, environment;
    std::optional<double> vfov, threshold, pixel_threshold, density_scale;
    std::optional<double> g, albedo, emission_scale, exposure, gamma;
    std::optional<int> width, height, max_level, spp, max_bounces, threads;
    std::optional<std::uint64_t> seed;
    bool use_camera = false, no_use_camera = false;
};

void add_camera_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--position", o.position, "camera position 'x,y,z'");
    cmd->add_option("--look-at", o.look_at, "camera target 'x,y,z'");
    cmd->add_option("--forward", o.forward, "view direction 'x,y,z' (alternative to --look-at)");
    cmd->add_option("--up", o.up, "up vector 'x,y,z'");
    cmd->add_option("--vfov", o.vfov, "vertical field of view, degrees");
    cmd->add_option("--width", o.width, "image width in pixels");
    cmd->add_option("--height", o.height, "image height in pixels");
}

void add_build_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--threshold", o.threshold, "refine while (max-min)/mean exceeds this");
    cmd->add_option("--max-level", o.max_level, "maximum bisection depth");
    cmd->add_flag("--use-camera", o.use_camera, "skip refinement outside the view frustum");
    cmd->add_flag("--no-use-camera", o.no_use_camera, "force view-independent refinement");
    cmd->add_option("--pixel-threshold", o.pixel_threshold, "minimum projected size worth refining, pixels");
    cmd->add_option("--density-scale", o.density_scale, "extinction = scale * density");
}

void add_render_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--spp", o.spp, "samples per pixel");
    cmd->add_option("--max-bounces", o.max_bounces, "path length cap");
    cmd->add_option("--seed", o.seed, "RNG seed");
    cmd->add_option("--g", o.g, "Henyey-Greenstein anisotropy in (-1,1)");
    cmd->add_option("--albedo", o.albedo, "scattering albedo for cells without their own");
    cmd->add_option("--environment", o.environment, "escape radiance 'r,g,b'");
    cmd->add_option("--emission-scale", o.emission_scale, "emission strength multiplier");
    cmd->add_option("--exposure", o.exposure, "linear exposure for 8-bit output");
    cmd->add_option("--gamma", o.gamma, "gamma for 8-bit output");
    cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

void apply_overrides(const Overrides& o, Settings& s) {
    if (o.position) s.camera.position = parse_vec3(*o.position, "--position");
    if (o.look_at) s.camera.look_at = parse_vec3(*o.look_at, "--look-at");
    if (o.forward) s.camera.forward = parse_vec3(*o.forward, "--forward");
    if (o.up) s.camera.up = parse_vec3(*o.up, "--up");
    if (o.vfov) s.camera.vfov = *o.vfov;
    if (o.width) s.camera.width = *o.width;
    if (o.height) s.camera.height = *o.height;
    if (o.threshold) s.build.variation_threshold = *o.threshold;
    if (o.max_level) s.build.max_level = *o.max_level;
    if (o.use_camera && o.no_use_camera) throw ConfigError("--use-camera conflicts with --no-use-camera");
    if (o.use_camera) s.build.use_camera = true;
    if (o.no_use_camera) s.build.use_camera = false;
    if (o.pixel_threshold) s.build.pixel_threshold = *o.pixel_threshold;
    if (o.density_scale) s.build.density_scale = *o.density_scale;
    if (o.spp) s.render.spp = *o.spp;
    if (o.max_bounces) s.render.max_bounces = *o.max_bounces;
    if (o.seed) s.render.seed = *o.seed;
    if (o.g) s.render.hg_g = *o.g;
    if (o.albedo) s.render.default_albedo = *o.albedo;
    if (o.environment) s.render.environment = parse_vec3(*o.environment, "--environment");
    if (o.emission_scale) s.render.emission_scale = *o.emission_scale;
    if (o.exposure) s.render.exposure = *o.exposure;
    if (o.gamma) s.render.gamma = *o.gamma;
    if (o.threads) s.threads = *o.threads;
}

Settings resolve_settings(const std::string& config_path, const Overrides& o) {
    Settings s;
    if (!config_path.empty()) load_config_file(config_path, s);
    apply_overrides(o, s);
    return s;
}

void emit(const json& j, std::ostream& out, const std::string& stats_path) {
    out << j.dump(2) << "\n";
    if (!stats_path.empty()) {
        std::ofstream f(stats_path);
        if (!f) throw IoError("cannot open '" + stats_path + "' for writing");
        f << j.dump(2) << "\n";
    }
}

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'");
    try {
        json j;
        f >> j;
        return j;
    } catch (const std::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

double jnum(const json& j, const char* key, const std::string& path) {
    if (!j.contains(key) || !j[key].is_number())
        throw FormatError(path + ": missing numeric field '" + std::string(key) + "'");
    return j[key].get<double>();
}

// ---- gen -----------------------------------------------------------------

double blob_density(const Vec3& p) {
    Vec3 d = p - Vec3{0.5, 0.5, 0.5};
    double t = std::max(0.0, 1.0 - length_sq(d) / (0.45 * 0.45));
    return t * t;  // smooth falloff, 1 at the center, 0 beyond r = 0.45
}

double value_noise(const Vec3& p) {
    constexpr std::uint64_t kSeed = 0x5eb0a8a5c9d3f1adull;  // fixed: gen is deterministic
    constexpr int kCells = 8;
    auto lattice = [](int ix, int iy, int iz) {
        std::uint64_t h = mix64(mix64(mix64(kSeed ^ static_cast<std::uint64_t>(ix)) ^ static_cast<std::uint64_t>(iy)) ^
                                static_cast<std::uint64_t>(iz));
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    };
    double x = std::clamp(p.x, 0.0, 1.0) * kCells;
    double y = std::clamp(p.y, 0.0, 1.0) * kCells;
    double z = std::clamp(p.z, 0.0, 1.0) * kCells;
    int ix = std::min(static_cast<int>(x), kCells - 1);
    int iy = std::min(static_cast<int>(y), kCells - 1);
    int iz = std::min(static_cast<int>(z), kCells - 1);
    double fx = x - ix, fy = y - iy, fz = z - iz;
    double v = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
                v += w * lattice(ix + dx, iy + dy, iz + dz);
            }
    return v;
}

int cmd_gen(const std::string& kind, const std::string& dims_text, const std::string& out_path, double value,
            bool with_temperature, std::optional<double> albedo_value, const std::string& stats_path,
            std::ostream& out) {
    auto dims = parse_dims(dims_text);
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1 || dims[0] > 4096 || dims[1] > 4096 || dims[2] > 4096)
        throw ConfigError("dims out of range [1, 4096]");

    DenseVolume vol(dims[0], dims[1], dims[2]);
    auto& density = vol.channel("density");
    for (int k = 0; k < dims[2]; ++k)
        for (int j = 0; j < dims[1]; ++j)
            for (int i = 0; i < dims[0]; ++i) {
                Vec3 p = vol.voxel_center(i, j, k);
                double d = 0.0;
                if (kind == "constant") d = value;
                else if (kind == "ramp") d = p.x;
                else if (kind == "blob") d = blob_density(p);
                else if (kind == "step") d = p.x < 0.5 ? 1.0 : 0.0;
                else if (kind == "noise") d = value_noise(p);
                else throw ConfigError("unknown kind '" + kind + "' (constant|ramp|blob|step|noise)");
                density[vol.index(i, j, k)] = static_cast<float>(d);
            }

    if (with_temperature) {
        auto& temp = vol.add_channel("temperature");  // invalidates earlier channel references
        const auto& den = vol.channel("density");
        for (std::size_t i = 0; i < temp.size(); ++i) temp[i] = std::clamp(den[i], 0.0f, 1.0f);
    }
    if (albedo_value) {
        if (*albedo_value < 0.0 || *albedo_value > 1.0) throw ConfigError("--with-albedo must be in [0,1]");
        auto& alb = vol.add_channel("albedo");
        std::fill(alb.begin(), alb.end(), static_cast<float>(*albedo_value));
    }
    vol.save_dvol(out_path);

    json j{{"schema", 1},
           {"command", "gen"},
           {"kind", kind},
           {"dims", {dims[0], dims[1], dims[2]}},
           {"channels", vol.channel_names()},
           {"out", out_path}};
    emit(j, out, stats_path);
    return 0;
}

// ---- build -----------------------------------------------------------------

int cmd_build(const std::string& volume_path, const std::string& out_path, const Settings& s,
              const std::string& stats_path, std::ostream& out, std::ostream& err) {
    DenseVolume vol = DenseVolume::load_dvol(volume_path);

    std::optional<PinholeCamera> camera;
    if (s.build.use_camera) camera.emplace(s.camera.make());

    BuildStats bstats;
    TetGrid grid = build_adaptive_grid(vol, s.build, camera ? &*camera : nullptr, &bstats);

    ValidationReport vr = grid.validate();
    if (!vr.ok) {
        err << "built grid failed validation: " << vr.first_violation << "\n";
        return 1;
    }
    save_grid(grid, out_path);

    json j{{"schema", 1},
           {"command", "build"},
           {"leafCount", bstats.leaf_count},
           {"maxDepthReached", bstats.max_depth},
           {"buildSeconds", bstats.seconds},
           {"criterionSplits", bstats.criterion_splits},
           {"propagationSplits", bstats.propagation_splits},
           {"tetCount", grid.tet_count()},
           {"vertexCount", grid.vertex_count()},
           {"out", out_path}};
    emit(j, out, stats_path);
    return 0;
}

// ---- render ----------------------------------------------------------------

int cmd_render(const std::string& grid_path, const std::string& volume_path, bool reference, const Settings& s,
               const std::string& ppm_path, const std::string& pfm_path, const std::string& var_pfm_path,
               const std::string& stats_path, std::ostream& out, std::ostream& err) {
    PinholeCamera camera = s.camera.make();
    s.render.validate();

    ImageAccumulator img;
    std::string mode;
    std::size_t cell_count = 0;

    if (reference) {
        DenseVolume vol = DenseVolume::load_dvol(volume_path);
        RegularGrid reg = RegularGrid::from_volume(vol, s.build.density_scale);
        img = render_reference(reg, camera, s.render, s.threads);
        mode = "reference";
        cell_count = reg.cell_count();
    } else {
        TetGrid grid;
        if (!grid_path.empty()) {
            grid = load_grid(grid_path);
        } else {
            DenseVolume vol = DenseVolume::load_dvol(volume_path);
            std::optional<PinholeCamera> build_cam;
            if (s.build.use_camera) build_cam.emplace(s.camera.make());
            err << "building adaptive grid from '" << volume_path << "'\n";
            grid = build_adaptive_grid(vol, s.build, build_cam ? &*build_cam : nullptr);
        }
        img = render(grid, camera, s.render, s.threads);
        mode = "tet";
        cell_count = grid.leaf_count();
    }

    if (!ppm_path.empty()) write_ppm(ppm_path, img, s.render.exposure, s.render.gamma);
    if (!pfm_path.empty()) write_pfm(pfm_path, img);
    if (!var_pfm_path.empty()) write_variance_pfm(var_pfm_path, img);

    json j{{"schema", 1},
           {"command", "render"},
           {"mode", mode},
           {"width", img.width},
           {"height", img.height},
           {"spp", s.render.spp},
           {"seed", s.render.seed},
           {"cellCount", cell_count},
           {"paths", img.paths_traced},
           {"cellsVisited", img.cells_visited},
           {"meanCellsPerPath",
            img.paths_traced ? static_cast<double>(img.cells_visited) / static_cast<double>(img.paths_traced) : 0.0},
           {"degeneratePaths", img.degenerate_paths},
           {"seconds", img.seconds}};
    if (!ppm_path.empty()) j["ppm"] = ppm_path;
    if (!pfm_path.empty()) j["pfm"] = pfm_path;
    if (!var_pfm_path.empty()) j["variancePfm"] = var_pfm_path;
    emit(j, out, stats_path);
    return 0;
}

// ---- compare ---------------------------------------------------------------

int cmd_compare(const std::string& image_a, const std::string& image_b, const std::string& stats_a,
                const std::string& stats_b, const std::string& var_a, const std::string& var_b,
                const std::string& stats_path, std::ostream& out) {
    FloatImage a = read_pfm(image_a);
    FloatImage b = read_pfm(image_b);
    if (a.width != b.width || a.height != b.height)
        throw FormatError("image dimensions differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                          " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));

    double sq_sum = 0.0, max_abs = 0.0;
    for (std::size_t i = 0; i < a.rgb.size(); ++i) {
        double d = static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i]);
        sq_sum += d * d;
        max_abs = std::max(max_abs, std::fabs(d));
    }
    double rmse = std::sqrt(sq_sum / static_cast<double>(a.rgb.size()));

    // 3-sigma outliers need the per-pixel variance images from both renders
    json outlier_fraction = nullptr;
    if (!var_a.empty() || !var_b.empty()) {
        if (var_a.empty() || var_b.empty()) throw ConfigError("--var-a and --var-b must be given together");
        FloatImage va = read_pfm(var_a);
        FloatImage vb = read_pfm(var_b);
        if (va.width != a.width || va.height != a.height || vb.width != a.width || vb.height != a.height)
            throw FormatError("variance image dimensions do not match the images");
        std::size_t outliers = 0, pixels = static_cast<std::size_t>(a.width) * a.height;
        for (std::size_t p = 0; p < pixels; ++p) {
            bool bad = false;
            for (int c = 0; c < 3; ++c) {
                std::size_t i = p * 3 + c;
                double d = std::fabs(static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i]));
                double sigma = std::sqrt(std::max(0.0, static_cast<double>(va.rgb[i]) + static_cast<double>(vb.rgb[i])));
                if (d > 3.0 * sigma) {  // sigma == 0: any nonzero difference is an outlier
                    bad = true;
                    break;
                }
            }
            if (bad) ++outliers;
        }
        outlier_fraction = static_cast<double>(outliers) / static_cast<double>(pixels);
    }

    json ja = read_json_file(stats_a);
    json jb = read_json_file(stats_b);
    double sec_a = jnum(ja, "seconds", stats_a), sec_b = jnum(jb, "seconds", stats_b);
    double paths_a = jnum(ja, "paths", stats_a), paths_b = jnum(jb, "paths", stats_b);
    double cells_a = jnum(ja, "cellsVisited", stats_a), cells_b = jnum(jb, "cellsVisited", stats_b);
    double count_a = jnum(ja, "cellCount", stats_a), count_b = jnum(jb, "cellCount", stats_b);
    double mean_a = paths_a > 0 ? cells_a / paths_a : 0.0;
    double mean_b = paths_b > 0 ? cells_b / paths_b : 0.0;

    json j{{"schema", 1},
           {"command", "compare"},
           {"width", a.width},
           {"height", a.height},
           {"rmse", rmse},
           {"maxAbsDiff", max_abs},
           {"outlierFraction", outlier_fraction},
           {"speedup", sec_a > 0 ? sec_b / sec_a : 0.0},
           {"cellsVisitedRatio", mean_a > 0 ? mean_b / mean_a : 0.0},
           {"cellCountRatio", count_a > 0 ? count_b / count_a : 0.0}};
    emit(j, out, stats_path);
    return 0;
}

// ---- validate ---------------------------------------------------------------

// uniform direction from two uniforms
Vec3 sphere_dir(double u1, double u2) {
    double z = 1.0 - 2.0 * u1;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = 2.0 * 3.14159265358979323846 * u2;
    return {r * std::cos(phi), r * std::sin(phi), z};
}

int cmd_validate(const std::string& grid_path, int ray_count, std::uint64_t seed, const std::string& stats_path,
                 std::ostream& out, std::ostream& err) {
    TetGrid grid = load_grid(grid_path);
    ValidationReport vr = grid.validate();

    int ray_failures = 0;
    std::string first_ray_violation;
    if (vr.ok && ray_count > 0) {
        BruteForceTraverser oracle(grid);
        const Vec3 center{0.5, 0.5, 0.5};
        for (int i = 0; i < ray_count; ++i) {
            RngStream rng(seed, 0x76616c6964617465ull, static_cast<std::uint64_t>(i));
            Vec3 origin = center + sphere_dir(rng.next(), rng.next()) * 2.0;
            Vec3 target{0.25 + 0.5 * rng.next(), 0.25 + 0.5 * rng.next(), 0.25 + 0.5 * rng.next()};
            Ray ray{origin, normalize(target - origin)};

            auto got = march_segments(grid, ray);
            auto want = oracle.segments(ray);
            auto keep = [](const std::vector<RaySegment>& in) {
                std::vector<RaySegment> o;
                for (const auto& s : in)
                    if (s.t_exit - s.t_enter > 1e-12) o.push_back(s);
                return o;
            };
            got = keep(got);
            want = keep(want);

            bool ok = got.size() == want.size();
            for (std::size_t k = 0; ok && k < got.size(); ++k)
                ok = got[k].cell == want[k].cell &&
                     std::fabs((got[k].t_exit - got[k].t_enter) - (want[k].t_exit - want[k].t_enter)) <= 1e-9;
            if (!ok) {
                ++ray_failures;
                if (first_ray_violation.empty())
                    first_ray_violation = "traversal mismatch vs brute-force oracle on spot-check ray " +
                                          std::to_string(i);
            }
        }
    }

    bool ok = vr.ok && ray_failures == 0;
    std::string violation = !vr.ok ? vr.first_violation : first_ray_violation;
    json j{{"schema", 1},
           {"command", "validate"},
           {"ok", ok},
           {"firstViolation", ok ? json(nullptr) : json(violation)},
           {"leafCount", vr.leaf_count},
           {"interiorFaces", vr.interior_faces},
           {"boundaryFaces", vr.boundary_faces},
           {"rayChecks", vr.ok ? ray_count : 0},
           {"rayFailures", ray_failures}};
    emit(j, out, stats_path);
    if (ok)
        err << "grid OK: " << vr.leaf_count << " leaves, " << vr.interior_faces << " interior faces\n";
    else
        err << "grid INVALID: " << violation << "\n";
    return ok ? 0 : 1;
}

// ---- stats -------------------------------------------------------------------

int cmd_stats(const std::string& grid_path, const std::string& volume_path, const std::string& stats_path,
              std::ostream& out) {
    json j{{"schema", 1}, {"command", "stats"}};
    if (!grid_path.empty()) {
        TetGrid grid = load_grid(grid_path);
        int max_level = 0;
        std::vector<std::uint64_t> per_level;
        double min_d = 0.0, max_d = 0.0, sum_d = 0.0;
        bool first = true;
        for (TetId id : grid.leaf_ids()) {
            const Tet& t = grid.tet(id);
            max_level = std::max(max_level, static_cast<int>(t.level));
            if (per_level.size() <= t.level) per_level.resize(t.level + 1, 0);
            ++per_level[t.level];
            double d = t.payload.density;
            if (first) min_d = max_d = d, first = false;
            min_d = std::min(min_d, d);
            max_d = std::max(max_d, d);
            sum_d += d;
        }
        j["kind"] = "grid";
        j["leafCount"] = grid.leaf_count();
        j["tetCount"] = grid.tet_count();
        j["vertexCount"] = grid.vertex_count();
        j["maxLeafLevel"] = max_level;
        j["leavesPerLevel"] = per_level;
        j["density"] = {{"min", min_d},
                        {"max", max_d},
                        {"mean", grid.leaf_count() ? sum_d / static_cast<double>(grid.leaf_count()) : 0.0}};
    } else {
        DenseVolume vol = DenseVolume::load_dvol(volume_path);
        j["kind"] = "volume";
        j["dims"] = {vol.nx(), vol.ny(), vol.nz()};
        json channels = json::array();
        for (const auto& name : vol.channel_names()) {
            const auto& data = vol.channel(name);
            double mn = 0.0, mx = 0.0, sum = 0.0;
            if (!data.empty()) {
                mn = mx = data[0];
                for (float v : data) {
                    mn = std::min(mn, static_cast<double>(v));
                    mx = std::max(mx, static_cast<double>(v));
                    sum += v;
                }
            }
            channels.push_back({{"name", name},
                                {"min", mn},
                                {"max", mx},
                                {"mean", data.empty() ? 0.0 : sum / static_cast<double>(data.size())}});
        }
        j["channels"] = channels;
    }
    emit(j, out, stats_path);
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"adaptive tetrahedral volume grids: build, render, compare"};
    app.name("tetvol");
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "write a procedural test volume (.dvol)");
    std::string gen_kind, gen_dims = "64", gen_out;
    double gen_value = 1.0;
    bool gen_temp = false;
    std::optional<double> gen_albedo;
    std::string gen_stats;
    gen->add_option("--kind", gen_kind, "constant|ramp|blob|step|noise")->required();
    gen->add_option("--dims", gen_dims, "N or NX,NY,NZ voxels");
    gen->add_option("--out", gen_out, "output .dvol path")->required();
    gen->add_option("--value", gen_value, "density of the constant kind");
    gen->add_flag("--with-temperature", gen_temp, "add a temperature channel (= density)");
    gen->add_option("--with-albedo", gen_albedo, "add a constant albedo channel");
    gen->add_option("--stats-out", gen_stats, "also write the JSON stats to this file");

    // build
    auto* build = app.add_subcommand("build", "build an adaptive tetrahedral grid (.tgrid) from a volume");
    std::string build_volume, build_out, build_config, build_stats;
    Overrides build_ov;
    build->add_option("--volume", build_volume, "input .dvol")->required();
    build->add_option("--out", build_out, "output .tgrid path")->required();
    build->add_option("--config", build_config, "config file ([camera]/[build]/[render] sections)");
    build->add_option("--stats-out", build_stats, "also write the JSON stats to this file");
    add_build_options(build, build_ov);
    add_camera_options(build, build_ov);

    // render
    auto* render = app.add_subcommand("render", "path-trace a grid or a reference voxel volume");
    std::string render_grid, render_volume, render_config;
    std::string render_ppm, render_pfm, render_var, render_stats;
    bool render_reference_flag = false;
    Overrides render_ov;
    auto* opt_grid = render->add_option("--grid", render_grid, "input .tgrid");
    auto* opt_vol = render->add_option("--volume", render_volume, "input .dvol");
    opt_grid->excludes(opt_vol);
    render->add_flag("--reference", render_reference_flag, "render the voxel volume directly (needs --volume)")
        ->needs(opt_vol);
    render->add_option("--config", render_config, "config file ([camera]/[build]/[render] sections)");
    render->add_option("--ppm", render_ppm, "8-bit tonemapped output path");
    render->add_option("--pfm", render_pfm, "linear float output path");
    render->add_option("--var-pfm", render_var, "per-pixel variance-of-mean output path");
    render->add_option("--stats-out", render_stats, "also write the JSON stats to this file");
    add_render_options(render, render_ov);
    add_build_options(render, render_ov);
    add_camera_options(render, render_ov);

    // compare
    auto* compare = app.add_subcommand("compare", "compare two renders (grid render vs reference render)");
    std::string cmp_a, cmp_b, cmp_sa, cmp_sb, cmp_va, cmp_vb, cmp_stats;
    compare->add_option("--image-a", cmp_a, "first linear image (.pfm), typically the grid render")->required();
    compare->add_option("--image-b", cmp_b, "second linear image (.pfm), typically the reference")->required();
    compare->add_option("--stats-a", cmp_sa, "render stats JSON for image A")->required();
    compare->add_option("--stats-b", cmp_sb, "render stats JSON for image B")->required();
    compare->add_option("--var-a", cmp_va, "variance image for A (enables the 3-sigma outlier test)");
    compare->add_option("--var-b", cmp_vb, "variance image for B");
    compare->add_option("--stats-out", cmp_stats, "also write the JSON report to this file");

    // validate
    auto* validate = app.add_subcommand("validate", "structural validation plus traversal spot checks");
    std::string val_grid, val_stats;
    int val_rays = 100;
    std::uint64_t val_seed = 0;
    validate->add_option("--grid", val_grid, "input .tgrid")->required();
    validate->add_option("--rays", val_rays, "number of random spot-check rays");
    validate->add_option("--seed", val_seed, "spot-check RNG seed");
    validate->add_option("--stats-out", val_stats, "also write the JSON report to this file");

    // stats
    auto* stats = app.add_subcommand("stats", "summarize a grid or a volume file");
    std::string stats_grid, stats_volume, stats_stats;
    auto* sg = stats->add_option("--grid", stats_grid, "input .tgrid");
    auto* sv = stats->add_option("--volume", stats_volume, "input .dvol");
    sg->excludes(sv);
    stats->add_option("--stats-out", stats_stats, "also write the JSON stats to this file");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);

        if (gen->parsed())
            return cmd_gen(gen_kind, gen_dims, gen_out, gen_value, gen_temp, gen_albedo, gen_stats, out);
        if (build->parsed()) {
            Settings s = resolve_settings(build_config, build_ov);
            return cmd_build(build_volume, build_out, s, build_stats, out, err);
        }
        if (render->parsed()) {
            if (render_grid.empty() && render_volume.empty())
                throw ConfigError("render needs --grid or --volume");
            Settings s = resolve_settings(render_config, render_ov);
            return cmd_render(render_grid, render_volume, render_reference_flag, s, render_ppm, render_pfm,
                              render_var, render_stats, out, err);
        }
        if (compare->parsed()) return cmd_compare(cmp_a, cmp_b, cmp_sa, cmp_sb, cmp_va, cmp_vb, cmp_stats, out);
        if (validate->parsed()) return cmd_validate(val_grid, val_rays, val_seed, val_stats, out, err);
        if (stats->parsed()) {
            if (stats_grid.empty() && stats_volume.empty()) throw ConfigError("stats needs --grid or --volume");
            return cmd_stats(stats_grid, stats_volume, stats_stats, out);
        }
        err << "no subcommand\n";
        return 2;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CameraError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace tetvol::cli
