#pragma once

#include <array>
#include <stdexcept>

#include "tetvol/geometry.hpp"

namespace tetvol {

struct CameraError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Pinhole camera. Pixel (0,0) is the top-left corner of the image; vfov is the
// full vertical field of view in degrees.
class PinholeCamera {
public:
    PinholeCamera(const Vec3& position, const Vec3& forward, const Vec3& up, double vfov_degrees, int width,
                  int height);

    // jitter in [0,1)^2 positions the sample inside the pixel footprint
    Ray primary_ray(int px, int py, double jx, double jy) const;

    // Conservative: true only when all four corners are outside one frustum plane
    // (never rejects a visible tet; may keep an invisible one).
    bool tet_outside_frustum(const std::array<Vec3, 4>& corners) const;

    // Longest-edge extent in pixels at the tet's distance; +inf when the camera
    // is inside the tet's bounding sphere.
    double projected_size_pixels(const std::array<Vec3, 4>& corners) const;

    const Vec3& position() const { return position_; }
    const Vec3& forward() const { return forward_; }
    const Vec3& up() const { return up_; }
    const Vec3& right() const { return right_; }
    double vfov_degrees() const { return vfov_deg_; }
    int width() const { return width_; }
    int height() const { return height_; }

private:
    Vec3 position_, forward_, up_, right_;
    double vfov_deg_;
    double tan_half_vfov_;
    double aspect_;
    int width_, height_;
    std::array<Vec3, 5> plane_n_;  // inward normals: near + 4 side planes
    std::array<double, 5> plane_d_;  // inside iff dot(n, p) >= d
};

}  // namespace tetvol
