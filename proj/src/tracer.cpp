#include "tetvol/tracer.hpp"

#include <cmath>

#include "tetvol/path_integrator.hpp"

namespace tetvol {

namespace {

constexpr double kNudge = 1e-7;          // re-entry offset after crossing a face
constexpr std::uint64_t kMaxSteps = 50'000'000;  // runaway guard per path
constexpr double kPi = 3.14159265358979323846;

Vec3 clamp_to_cube(Vec3 p) {
    p.x = std::clamp(p.x, 0.0, 1.0);
    p.y = std::clamp(p.y, 0.0, 1.0);
    p.z = std::clamp(p.z, 0.0, 1.0);
    return p;
}

// Cell walker over the tet grid. Face crossings re-derive the global ray
// parameter from the stored plane normals, so consecutive segments share
// endpoints exactly and the 1e-7 re-entry nudge never leaks into lengths.
class TetMarcher {
public:
    explicit TetMarcher(const TetGrid& grid) : grid_(&grid) {}

    bool start(const Ray& ray) {
        aborted_ = false;
        escaped_ = false;
        steps_ = 0;
        ray_ = ray;
        ray_.t_min = std::max(0.0, ray.t_min);
        double t0, t1;
        if (!intersect_unit_cube(ray_, t0, t1)) return false;
        try {
            cell_ = grid_->locate_point(clamp_to_cube(ray_.at(t0 + kNudge)));
        } catch (const OutsideGrid&) {
            return false;  // grazing chord shorter than the nudge
        }
        seg_start_ = t0;
        probe_t_ = t0 + kNudge;
        return true;
    }

    std::optional<detail::MarchStep> next() {
        if (aborted_ || escaped_) return std::nullopt;
        if (++steps_ > kMaxSteps) {
            aborted_ = true;
            return std::nullopt;
        }
        auto ef = exit_face(*grid_, cell_, ray_.at(probe_t_), ray_.dir);
        if (!ef) {  // degenerate corner: one nudged retry, then give up on the path
            probe_t_ += kNudge;
            ef = exit_face(*grid_, cell_, ray_.at(probe_t_), ray_.dir);
            if (!ef) {
                aborted_ = true;
                return std::nullopt;
            }
        }
        double t_exit = std::max(probe_t_ + ef->t, seg_start_);

        detail::MarchStep step;
        step.t0 = seg_start_;
        step.lambda = grid_->payload(cell_).density;
        step.cell = cell_;
        last_cell_ = cell_;
        last_t0_ = seg_start_;

        if (t_exit >= ray_.t_max) {  // caller-imposed range ends inside the grid
            step.t1 = ray_.t_max;
            escaped_ = true;
            event_point_ = ray_.at(ray_.t_max);
            return step;
        }
        step.t1 = t_exit;
        const TetId nbr = grid_->tet(cell_).neighbors[ef->slot];
        if (nbr == kNoTet) {
            escaped_ = true;
            event_point_ = ray_.at(t_exit);
        } else {
            cell_ = nbr;
            seg_start_ = t_exit;
            probe_t_ = t_exit + kNudge;
        }
        return step;
    }

    void shorten(double dist) {
        event_point_ = ray_.at(last_t0_ + dist);
        event_t_ = last_t0_ + dist;
        cell_ = last_cell_;
        escaped_ = false;
    }

    void redirect(const Vec3& dir) {
        ray_.origin = event_point_;
        ray_.dir = dir;
        ray_.t_min = 0.0;
        ray_.t_max = std::numeric_limits<double>::infinity();
        seg_start_ = 0.0;
        probe_t_ = 0.0;
        escaped_ = false;
    }

    Vec3 position() const { return event_point_; }
    double event_t() const { return event_t_; }
    Vec3 direction() const { return ray_.dir; }
    MediaPayload media() const { return grid_->payload(last_cell_); }
    TetId event_cell() const { return last_cell_; }
    bool aborted() const { return aborted_; }

private:
    const TetGrid* grid_;
    Ray ray_;
    TetId cell_ = kNoTet;
    TetId last_cell_ = kNoTet;
    double seg_start_ = 0.0;
    double probe_t_ = 0.0;
    double last_t0_ = 0.0;
    double event_t_ = 0.0;
    Vec3 event_point_;
    bool aborted_ = false;
    bool escaped_ = false;
    std::uint64_t steps_ = 0;
};

}  // namespace

void RenderConfig::validate() const {
    if (spp < 1) throw ConfigError("spp must be at least 1");
    if (max_bounces < 1) throw ConfigError("maxBounces must be at least 1");
    if (!(hg_g > -1.0 && hg_g < 1.0)) throw ConfigError("phase anisotropy g must be in (-1, 1)");
    if (!(default_albedo >= 0.0 && default_albedo <= 1.0)) throw ConfigError("albedo must be in [0, 1]");
    if (environment.x < 0.0 || environment.y < 0.0 || environment.z < 0.0)
        throw ConfigError("environment radiance must be non-negative");
    if (emission_scale < 0.0) throw ConfigError("emissionScale must be non-negative");
    if (!(exposure > 0.0)) throw ConfigError("exposure must be positive");
    if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
}

std::optional<ExitFace> exit_face(const TetGrid& grid, TetId cell, const Vec3& pos, const Vec3& dir) {
    const Tet& tt = grid.tet(cell);
    const auto& table = face_normal_table();
    ExitFace best;
    best.t = std::numeric_limits<double>::infinity();
    for (int slot = 0; slot < 4; ++slot) {
        const Vec3& n = table[tt.normal_ids[slot]];
        const double dn = dot(n, dir);
        if (dn <= 1e-12) continue;  // face is not in the exit half-space
        const Vec3 v = grid.vertex_position(tt.verts[(slot + 1) & 3]);  // any vertex on the face
        double t = dot(n, v - pos) / dn;
        if (t < 0.0) t = 0.0;  // pos can sit rounding-distance past the plane
        if (t < best.t) {  // strict: ties keep the smaller face index
            best.t = t;
            best.slot = slot;
        }
    }
    if (best.slot < 0) return std::nullopt;
    return best;
}

std::vector<RaySegment> march_segments(const TetGrid& grid, const Ray& ray, TraceStats* stats) {
    std::vector<RaySegment> out;
    TetMarcher m(grid);
    if (!m.start(ray)) return out;
    while (auto step = m.next()) {
        if (stats) ++stats->cells_visited;
        out.push_back(RaySegment{step->cell, step->t0, step->t1});
    }
    if (m.aborted() && stats) ++stats->degenerate_paths;
    return out;
}

double march_transmittance(const TetGrid& grid, const Ray& ray, TraceStats* stats) {
    TetMarcher m(grid);
    if (!m.start(ray)) return 1.0;
    double tau = 0.0;
    while (auto step = m.next()) {
        if (stats) ++stats->cells_visited;
        tau += step->lambda * (step->t1 - step->t0);
    }
    if (m.aborted() && stats) ++stats->degenerate_paths;
    return std::exp(-tau);
}

FreePathSample sample_free_path(const TetGrid& grid, const Ray& ray, RngStream& rng, TraceStats* stats) {
    FreePathSample out;
    TetMarcher m(grid);
    const double target_tau = -std::log(1.0 - rng.next());
    if (!m.start(ray)) {
        out.position = ray.origin;
        return out;
    }
    double tau = 0.0;
    double last_t1 = 0.0;
    while (auto step = m.next()) {
        if (stats) ++stats->cells_visited;
        const double seg_tau = step->lambda * (step->t1 - step->t0);
        if (step->lambda > 0.0 && tau + seg_tau >= target_tau) {
            m.shorten((target_tau - tau) / step->lambda);
            out.collided = true;
            out.position = m.position();
            out.cell = m.event_cell();
            out.distance = m.event_t();
            return out;
        }
        tau += seg_tau;
        last_t1 = step->t1;
    }
    if (m.aborted() && stats) ++stats->degenerate_paths;
    out.position = m.aborted() ? ray.at(last_t1) : m.position();
    out.distance = last_t1;
    return out;
}

double hg_sample_cos(double g, double xi) {
    if (std::abs(g) < 1e-6) return 1.0 - 2.0 * xi;
    const double sq = (1.0 - g * g) / (1.0 - g + 2.0 * g * xi);
    return std::clamp((1.0 + g * g - sq * sq) / (2.0 * g), -1.0, 1.0);
}

Vec3 sample_phase_hg(const Vec3& dir, double g, RngStream& rng) {
    const double u1 = rng.next();
    const double u2 = rng.next();
    const double cos_theta = hg_sample_cos(g, u1);
    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
    const double phi = 2.0 * kPi * u2;

    Vec3 t = std::abs(dir.z) < 0.999 ? normalize(cross(Vec3{0, 0, 1}, dir)) : normalize(cross(Vec3{1, 0, 0}, dir));
    Vec3 b = cross(dir, t);
    return normalize(t * (sin_theta * std::cos(phi)) + b * (sin_theta * std::sin(phi)) + dir * cos_theta);
}

double hg_pdf(double cos_theta, double g) {
    const double denom = 1.0 + g * g - 2.0 * g * cos_theta;
    return (1.0 - g * g) / (4.0 * kPi * denom * std::sqrt(denom));
}

Vec3 emission_color(double temperature) {
    // monotone per channel: black -> deep red -> orange -> white
    static constexpr double lut[9][3] = {
        {0.00, 0.00, 0.00}, {0.25, 0.02, 0.00}, {0.50, 0.05, 0.00},
        {0.75, 0.12, 0.01}, {1.00, 0.25, 0.02}, {1.00, 0.45, 0.08},
        {1.00, 0.65, 0.20}, {1.00, 0.85, 0.55}, {1.00, 1.00, 1.00},
    };
    const double t = std::clamp(temperature, 0.0, 1.0) * 8.0;
    const int i0 = std::min(static_cast<int>(t), 7);
    const double f = t - i0;
    Vec3 out;
    out.x = lut[i0][0] + (lut[i0 + 1][0] - lut[i0][0]) * f;
    out.y = lut[i0][1] + (lut[i0 + 1][1] - lut[i0][1]) * f;
    out.z = lut[i0][2] + (lut[i0 + 1][2] - lut[i0][2]) * f;
    return out;
}

Vec3 trace(const TetGrid& grid, const Ray& ray, const RenderConfig& cfg, RngStream& rng, TraceStats* stats) {
    TetMarcher m(grid);
    TraceStats local;
    Vec3 L = detail::trace_path(m, ray, cfg, rng, stats ? *stats : local);
    return L;
}

ImageAccumulator render(const TetGrid& grid, const PinholeCamera& camera, const RenderConfig& cfg, int threads) {
    return detail::render_image([&grid] { return TetMarcher(grid); }, camera, cfg, threads);
}

}  // namespace tetvol
