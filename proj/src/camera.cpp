#include "tetvol/camera.hpp"

#include <cmath>

namespace tetvol {

namespace {
constexpr double kNearDistance = 1e-4;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

PinholeCamera::PinholeCamera(const Vec3& position, const Vec3& forward, const Vec3& up, double vfov_degrees,
                             int width, int height)
    : position_(position), vfov_deg_(vfov_degrees), width_(width), height_(height) {
    if (width < 1 || height < 1) throw CameraError("image dimensions must be positive");
    if (!(vfov_degrees > 0.0 && vfov_degrees < 180.0)) throw CameraError("vfov must be in (0, 180) degrees");
    if (length(forward) == 0.0) throw CameraError("forward vector must be nonzero");
    forward_ = normalize(forward);
    Vec3 up_ortho = up - forward_ * dot(up, forward_);
    if (length(up_ortho) < 1e-12) throw CameraError("up vector is parallel to the view direction");
    up_ = normalize(up_ortho);
    right_ = cross(up_, forward_);  // screen-x axis as seen by the viewer

    tan_half_vfov_ = std::tan(vfov_deg_ * kPi / 360.0);
    aspect_ = static_cast<double>(width_) / height_;

    // frustum planes, inward normals
    auto corner_dir = [&](double u, double v) {
        return normalize(forward_ + right_ * ((2.0 * u - 1.0) * tan_half_vfov_ * aspect_) +
                         up_ * ((1.0 - 2.0 * v) * tan_half_vfov_));
    };
    const Vec3 tl = corner_dir(0, 0), tr = corner_dir(1, 0), bl = corner_dir(0, 1), br = corner_dir(1, 1);
    auto side_plane = [&](const Vec3& a, const Vec3& b, int idx) {
        Vec3 n = normalize(cross(a, b));
        if (dot(n, forward_) < 0.0) n = -n;  // frustum interior is on the forward side
        plane_n_[idx] = n;
        plane_d_[idx] = dot(n, position_);
    };
    plane_n_[0] = forward_;
    plane_d_[0] = dot(forward_, position_) + kNearDistance;
    side_plane(tl, bl, 1);  // left
    side_plane(br, tr, 2);  // right
    side_plane(tr, tl, 3);  // top
    side_plane(bl, br, 4);  // bottom
}

Ray PinholeCamera::primary_ray(int px, int py, double jx, double jy) const {
    const double u = (px + jx) / width_;
    const double v = (py + jy) / height_;
    Ray r;
    r.origin = position_;
    r.dir = normalize(forward_ + right_ * ((2.0 * u - 1.0) * tan_half_vfov_ * aspect_) +
                      up_ * ((1.0 - 2.0 * v) * tan_half_vfov_));
    return r;
}

bool PinholeCamera::tet_outside_frustum(const std::array<Vec3, 4>& corners) const {
    for (int p = 0; p < 5; ++p) {
        bool all_out = true;
        for (const Vec3& c : corners)
            if (dot(plane_n_[p], c) >= plane_d_[p]) {
                all_out = false;
                break;
            }
        if (all_out) return true;
    }
    return false;
}

double PinholeCamera::projected_size_pixels(const std::array<Vec3, 4>& corners) const {
    static constexpr int P[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    double longest_sq = 0.0;
    for (auto& e : P) longest_sq = std::max(longest_sq, length_sq(corners[e[0]] - corners[e[1]]));
    const double longest = std::sqrt(longest_sq);

    const Vec3 centroid = (corners[0] + corners[1] + corners[2] + corners[3]) * 0.25;
    double radius_sq = 0.0;
    for (const Vec3& c : corners) radius_sq = std::max(radius_sq, length_sq(c - centroid));

    const Vec3 to_centroid = centroid - position_;
    if (length_sq(to_centroid) <= radius_sq) return std::numeric_limits<double>::infinity();

    const double dist = std::max(length(to_centroid), kNearDistance);
    return longest / (2.0 * dist * tan_half_vfov_) * height_;
}

}  // namespace tetvol
