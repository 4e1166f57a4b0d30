#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tetvol/geometry.hpp"

namespace tetvol {

struct ImageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-pixel running sums of radiance samples. sum_sq feeds the per-pixel
// variance estimate used for statistical image comparison.
struct ImageAccumulator {
    int width = 0, height = 0;
    std::vector<double> sum;      // 3 doubles per pixel
    std::vector<double> sum_sq;   // 3 doubles per pixel
    std::vector<std::uint32_t> sample_counts;
    std::uint64_t cells_visited = 0;
    std::uint64_t paths_traced = 0;
    std::uint64_t degenerate_paths = 0;
    double seconds = 0.0;

    ImageAccumulator() = default;
    ImageAccumulator(int w, int h)
        : width(w),
          height(h),
          sum(static_cast<std::size_t>(w) * h * 3, 0.0),
          sum_sq(static_cast<std::size_t>(w) * h * 3, 0.0),
          sample_counts(static_cast<std::size_t>(w) * h, 0) {}

    void add_sample(int px, int py, const Vec3& rgb) {
        std::size_t i = (static_cast<std::size_t>(py) * width + px) * 3;
        sum[i] += rgb.x;
        sum[i + 1] += rgb.y;
        sum[i + 2] += rgb.z;
        sum_sq[i] += rgb.x * rgb.x;
        sum_sq[i + 1] += rgb.y * rgb.y;
        sum_sq[i + 2] += rgb.z * rgb.z;
        ++sample_counts[static_cast<std::size_t>(py) * width + px];
    }

    Vec3 mean(int px, int py) const {
        std::size_t p = static_cast<std::size_t>(py) * width + px;
        std::uint32_t n = sample_counts[p];
        if (n == 0) return {0, 0, 0};
        std::size_t i = p * 3;
        return {sum[i] / n, sum[i + 1] / n, sum[i + 2] / n};
    }

    // Variance of the per-pixel mean estimate (sample variance / n); 0 when n < 2.
    Vec3 variance_of_mean(int px, int py) const {
        std::size_t p = static_cast<std::size_t>(py) * width + px;
        std::uint32_t n = sample_counts[p];
        if (n < 2) return {0, 0, 0};
        std::size_t i = p * 3;
        Vec3 out;
        double* o = &out.x;
        for (int c = 0; c < 3; ++c) {
            double m = sum[i + c] / n;
            double var = (sum_sq[i + c] - static_cast<double>(n) * m * m) / (n - 1.0);
            o[c] = std::max(0.0, var) / n;
        }
        return out;
    }
};

// Simple float RGB image (linear radiance), used for PFM round trips.
struct FloatImage {
    int width = 0, height = 0;
    std::vector<float> rgb;  // 3 per pixel, row 0 = top

    Vec3 pixel(int px, int py) const {
        std::size_t i = (static_cast<std::size_t>(py) * width + px) * 3;
        return {rgb[i], rgb[i + 1], rgb[i + 2]};
    }
};

// 8-bit PPM (P6) with exposure scaling and gamma encoding.
void write_ppm(const std::string& path, const ImageAccumulator& img, double exposure, double gamma);

// PFM ('PF', scale -1.0 = little-endian, rows stored bottom-to-top): linear means.
void write_pfm(const std::string& path, const ImageAccumulator& img);
void write_pfm(const std::string& path, const FloatImage& img);
// Per-pixel variance of the mean, for statistical comparisons downstream.
void write_variance_pfm(const std::string& path, const ImageAccumulator& img);

FloatImage read_pfm(const std::string& path);

}  // namespace tetvol
