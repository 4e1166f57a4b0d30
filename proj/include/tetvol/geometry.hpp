#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace tetvol {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    constexpr Vec3() = default;
    constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    // component-wise product (used for RGB throughput)
    constexpr Vec3 operator*(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }

    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
    Vec3& operator*=(const Vec3& o) { x *= o.x; y *= o.y; z *= o.z; return *this; }

    constexpr bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double length(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline constexpr double length_sq(const Vec3& v) { return dot(v, v); }

inline Vec3 normalize(const Vec3& v) {
    double len = length(v);
    return len > 0.0 ? v / len : Vec3{0, 0, 0};
}

inline constexpr double max_component(const Vec3& v) { return std::max(v.x, std::max(v.y, v.z)); }
inline constexpr double min_component(const Vec3& v) { return std::min(v.x, std::min(v.y, v.z)); }

struct Ray {
    Vec3 origin;
    Vec3 dir;  // unit length expected by traversal code
    double t_min = 0.0;
    double t_max = std::numeric_limits<double>::infinity();

    Vec3 at(double t) const { return origin + dir * t; }
};

// Slab test against the axis-aligned unit cube [0,1]^3.
// Returns false on miss; otherwise [t0, t1] is the (clamped to ray range) overlap.
inline bool intersect_unit_cube(const Ray& ray, double& t0, double& t1) {
    t0 = ray.t_min;
    t1 = ray.t_max;
    for (int axis = 0; axis < 3; ++axis) {
        double o = ray.origin[axis];
        double d = ray.dir[axis];
        if (d == 0.0) {
            if (o < 0.0 || o > 1.0) return false;
            continue;
        }
        double inv = 1.0 / d;
        double ta = (0.0 - o) * inv;
        double tb = (1.0 - o) * inv;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    return true;
}

}  // namespace tetvol
