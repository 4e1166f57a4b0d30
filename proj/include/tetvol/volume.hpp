#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tetvol/geometry.hpp"

namespace tetvol {

struct VolumeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnknownChannel : VolumeError {
    using VolumeError::VolumeError;
};

// Dense voxel grid over the unit cube. Data is x-fastest; voxel (i,j,k) covers
// [i/nx,(i+1)/nx) x ... with its sample point at the center.
class DenseVolume {
public:
    DenseVolume() = default;
    DenseVolume(int nx, int ny, int nz);  // starts with a zero-filled "density" channel

    static DenseVolume load_dvol(const std::string& path);
    void save_dvol(const std::string& path) const;

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int nz() const { return nz_; }
    std::size_t voxel_count() const { return static_cast<std::size_t>(nx_) * ny_ * nz_; }

    const std::vector<std::string>& channel_names() const { return names_; }
    bool has_channel(const std::string& name) const;
    std::vector<float>& add_channel(const std::string& name);  // zero-filled; error if present
    const std::vector<float>& channel(const std::string& name) const;
    std::vector<float>& channel(const std::string& name);

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * ny_ + j) * nx_ + i;
    }
    Vec3 voxel_center(int i, int j, int k) const {
        return {(i + 0.5) / nx_, (j + 0.5) / ny_, (k + 0.5) / nz_};
    }

    // Trilinear interpolation between voxel centers, clamped to the edge samples.
    double trilinear_sample(const Vec3& p, const std::string& name) const;
    double trilinear_sample(const Vec3& p, const std::vector<float>& data) const;

private:
    int nx_ = 0, ny_ = 0, nz_ = 0;
    std::vector<std::string> names_;
    std::vector<std::vector<float>> data_;
};

struct DensityStats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    std::size_t count = 0;  // voxel centers found inside; 0 means centroid fallback was used
};

// Stats of a channel over all voxel centers inside the closed tetrahedron. When
// no center falls inside, falls back to the trilinear sample at the tet centroid
// (count stays 0, min = max = mean).
DensityStats density_stats_in_tet(const DenseVolume& vol, const std::array<Vec3, 4>& corners,
                                  const std::string& channel = "density");

// Relative spread (max - min) / mean; defined as 0 when the mean is 0.
double variation_metric(const DensityStats& s);

// Outward plane set of a tetrahedron: point p is inside (closed) iff
// dot(n[f], p) <= d[f] + eps for all four faces.
struct TetPlanes {
    std::array<Vec3, 4> n;
    std::array<double, 4> d;

    explicit TetPlanes(const std::array<Vec3, 4>& corners);
    bool contains(const Vec3& p, double eps) const {
        for (int f = 0; f < 4; ++f)
            if (dot(n[f], p) > d[f] + eps) return false;
        return true;
    }
    // strictly inside by margin eps / strictly outside by margin eps
    bool strictly_inside(const Vec3& p, double eps) const {
        for (int f = 0; f < 4; ++f)
            if (dot(n[f], p) > d[f] - eps) return false;
        return true;
    }
    bool strictly_outside(const Vec3& p, double eps) const {
        for (int f = 0; f < 4; ++f)
            if (dot(n[f], p) > d[f] + eps) return true;
        return false;
    }
};

// Voxel-center index ranges intersecting an AABB (clamped to the volume).
struct CenterRange {
    int lo[3];
    int hi[3];  // inclusive; empty when lo > hi on any axis
};
CenterRange centers_in_aabb(const DenseVolume& vol, const Vec3& lo, const Vec3& hi);

}  // namespace tetvol
