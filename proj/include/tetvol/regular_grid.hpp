#pragma once

#include <cstdint>
#include <vector>

#include "tetvol/camera.hpp"
#include "tetvol/geometry.hpp"
#include "tetvol/image.hpp"
#include "tetvol/tracer.hpp"
#include "tetvol/volume.hpp"

namespace tetvol {

// Reference medium: one cell per voxel over the unit cube, extinction
// pre-multiplied by the density scale. Serves as the ground truth the adaptive
// grid renderer is validated against.
class RegularGrid {
public:
    static RegularGrid from_volume(const DenseVolume& vol, double density_scale);

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int nz() const { return nz_; }
    std::size_t cell_count() const { return density_.size(); }

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * ny_ + j) * nx_ + i;
    }
    float cell_density(std::size_t flat) const { return density_[flat]; }

    bool has_temperature() const { return !temperature_.empty(); }
    bool has_albedo() const { return !albedo_.empty(); }

    MediaPayload cell_media(std::size_t flat) const {
        MediaPayload p;
        p.density = density_[flat];
        p.mask = 1;
        if (!temperature_.empty()) {
            p.temperature = temperature_[flat];
            p.mask |= 2;
        }
        if (!albedo_.empty()) {
            p.albedo = albedo_[flat];
            p.mask |= 4;
        }
        return p;
    }

private:
    int nx_ = 0, ny_ = 0, nz_ = 0;
    std::vector<float> density_;      // extinction, already scaled
    std::vector<float> temperature_;  // empty when the volume has no such channel
    std::vector<float> albedo_;
};

// Cells crossed by the ray (3D digital differential analyzer), in order, with
// exact shared endpoints between consecutive segments.
std::vector<RaySegment> dda_march(const RegularGrid& grid, const Ray& ray, TraceStats* stats = nullptr);

double march_transmittance(const RegularGrid& grid, const Ray& ray, TraceStats* stats = nullptr);

Vec3 trace(const RegularGrid& grid, const Ray& ray, const RenderConfig& cfg, RngStream& rng,
           TraceStats* stats = nullptr);

// Same integrator as render(); only the cell enumeration differs.
ImageAccumulator render_reference(const RegularGrid& grid, const PinholeCamera& camera, const RenderConfig& cfg,
                                  int threads = 0);

}  // namespace tetvol
