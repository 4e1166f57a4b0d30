#include "tetvol/regular_grid.hpp"

#include <algorithm>
#include <cmath>

#include "tetvol/path_integrator.hpp"

namespace tetvol {

namespace {

constexpr double kEntryNudge = 1e-9;

// Amanatides & Woo style voxel walker with the same interface as the tet
// marcher, so the shared integrator drives both.
class DdaMarcher {
public:
    explicit DdaMarcher(const RegularGrid& grid) : grid_(&grid) {}

    bool start(const Ray& ray) {
        escaped_ = false;
        ray_ = ray;
        ray_.t_min = std::max(0.0, ray.t_min);
        double t0, t1;
        if (!intersect_unit_cube(ray_, t0, t1)) return false;
        t_end_ = t1;
        const Vec3 p = ray_.at(t0 + kEntryNudge);
        const int dims[3] = {grid_->nx(), grid_->ny(), grid_->nz()};
        for (int a = 0; a < 3; ++a) {
            idx_[a] = std::clamp(static_cast<int>(std::floor(p[a] * dims[a])), 0, dims[a] - 1);
            const double d = ray_.dir[a];
            if (d > 0.0) {
                step_[a] = 1;
                t_next_[a] = ((idx_[a] + 1.0) / dims[a] - ray_.origin[a]) / d;
                t_delta_[a] = 1.0 / (dims[a] * d);
            } else if (d < 0.0) {
                step_[a] = -1;
                t_next_[a] = (static_cast<double>(idx_[a]) / dims[a] - ray_.origin[a]) / d;
                t_delta_[a] = -1.0 / (dims[a] * d);
            } else {
                step_[a] = 0;
                t_next_[a] = std::numeric_limits<double>::infinity();
                t_delta_[a] = std::numeric_limits<double>::infinity();
            }
        }
        t_cur_ = t0;
        return true;
    }

    std::optional<detail::MarchStep> next() {
        if (escaped_) return std::nullopt;
        const int axis = t_next_[0] <= t_next_[1] ? (t_next_[0] <= t_next_[2] ? 0 : 2)
                                                  : (t_next_[1] <= t_next_[2] ? 1 : 2);
        double t_exit = t_next_[axis];

        detail::MarchStep step;
        step.t0 = t_cur_;
        const std::size_t flat = grid_->index(idx_[0], idx_[1], idx_[2]);
        step.lambda = grid_->cell_density(flat);
        step.cell = static_cast<std::uint32_t>(flat);
        last_cell_ = flat;
        last_t0_ = t_cur_;

        if (t_exit >= ray_.t_max) {  // caller-imposed range ends inside the grid
            step.t1 = ray_.t_max;
            escaped_ = true;
            event_point_ = ray_.at(ray_.t_max);
            return step;
        }

        const int dims[3] = {grid_->nx(), grid_->ny(), grid_->nz()};
        idx_[axis] += step_[axis];
        t_next_[axis] += t_delta_[axis];
        if (idx_[axis] < 0 || idx_[axis] >= dims[axis] || t_exit >= t_end_ - 1e-15) {
            // leaving the cube: close the last cell exactly at the cube boundary
            t_exit = t_end_;
            escaped_ = true;
            event_point_ = ray_.at(t_exit);
        }
        step.t1 = t_exit;
        t_cur_ = t_exit;
        return step;
    }

    void shorten(double dist) {
        event_point_ = ray_.at(last_t0_ + dist);
        event_t_ = last_t0_ + dist;
        escaped_ = false;
    }

    void redirect(const Vec3& dir) {
        Ray r;
        r.origin = event_point_;
        r.dir = dir;
        if (!start(r)) escaped_ = true;  // collision point was right on the boundary
    }

    Vec3 position() const { return event_point_; }
    double event_t() const { return event_t_; }
    Vec3 direction() const { return ray_.dir; }
    MediaPayload media() const { return grid_->cell_media(last_cell_); }  // last stepped = collision cell
    bool aborted() const { return false; }  // the DDA cannot get stuck

private:
    const RegularGrid* grid_;
    Ray ray_;
    int idx_[3] = {0, 0, 0};
    int step_[3] = {0, 0, 0};
    double t_next_[3] = {0, 0, 0};
    double t_delta_[3] = {0, 0, 0};
    double t_cur_ = 0.0;
    double t_end_ = 0.0;
    double last_t0_ = 0.0;
    double event_t_ = 0.0;
    std::size_t last_cell_ = 0;
    Vec3 event_point_;
    bool escaped_ = false;
};

}  // namespace

RegularGrid RegularGrid::from_volume(const DenseVolume& vol, double density_scale) {
    if (density_scale < 0.0) throw VolumeError("density scale must be non-negative");
    RegularGrid g;
    g.nx_ = vol.nx();
    g.ny_ = vol.ny();
    g.nz_ = vol.nz();
    const auto& d = vol.channel("density");
    g.density_.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) g.density_[i] = static_cast<float>(d[i] * density_scale);
    if (vol.has_channel("temperature")) g.temperature_ = vol.channel("temperature");
    if (vol.has_channel("albedo")) g.albedo_ = vol.channel("albedo");
    return g;
}

std::vector<RaySegment> dda_march(const RegularGrid& grid, const Ray& ray, TraceStats* stats) {
    std::vector<RaySegment> out;
    DdaMarcher m(grid);
    if (!m.start(ray)) return out;
    while (auto step = m.next()) {
        if (stats) ++stats->cells_visited;
        out.push_back(RaySegment{step->cell, step->t0, step->t1});
    }
    return out;
}

double march_transmittance(const RegularGrid& grid, const Ray& ray, TraceStats* stats) {
    DdaMarcher m(grid);
    if (!m.start(ray)) return 1.0;
    double tau = 0.0;
    while (auto step = m.next()) {
        if (stats) ++stats->cells_visited;
        tau += step->lambda * (step->t1 - step->t0);
    }
    return std::exp(-tau);
}

Vec3 trace(const RegularGrid& grid, const Ray& ray, const RenderConfig& cfg, RngStream& rng, TraceStats* stats) {
    DdaMarcher m(grid);
    TraceStats local;
    return detail::trace_path(m, ray, cfg, rng, stats ? *stats : local);
}

ImageAccumulator render_reference(const RegularGrid& grid, const PinholeCamera& camera, const RenderConfig& cfg,
                                  int threads) {
    return detail::render_image([&grid] { return DdaMarcher(grid); }, camera, cfg, threads);
}

}  // namespace tetvol
