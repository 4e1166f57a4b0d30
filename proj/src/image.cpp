#include "tetvol/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace tetvol {

static_assert(std::endian::native == std::endian::little, "PFM writer assumes a little-endian host");

void write_ppm(const std::string& path, const ImageAccumulator& img, double exposure, double gamma) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ImageError("cannot open for writing: " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
    const double inv_gamma = 1.0 / gamma;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            Vec3 c = img.mean(x, y) * exposure;
            const double v[3] = {c.x, c.y, c.z};
            for (int k = 0; k < 3; ++k) {
                double e = std::pow(std::clamp(v[k], 0.0, 1.0), inv_gamma);
                row[static_cast<std::size_t>(x) * 3 + k] = static_cast<unsigned char>(e * 255.0 + 0.5);
            }
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw ImageError("write failed: " + path);
}

namespace {

void write_pfm_rows(const std::string& path, int width, int height,
                    const std::vector<float>& top_down_rgb) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ImageError("cannot open for writing: " + path);
    f << "PF\n" << width << " " << height << "\n-1.000000\n";
    // PFM stores rows bottom to top
    for (int y = height - 1; y >= 0; --y)
        f.write(reinterpret_cast<const char*>(&top_down_rgb[static_cast<std::size_t>(y) * width * 3]),
                static_cast<std::streamsize>(static_cast<std::size_t>(width) * 3 * sizeof(float)));
    if (!f) throw ImageError("write failed: " + path);
}

}  // namespace

void write_pfm(const std::string& path, const ImageAccumulator& img) {
    std::vector<float> data(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            Vec3 c = img.mean(x, y);
            std::size_t i = (static_cast<std::size_t>(y) * img.width + x) * 3;
            data[i] = static_cast<float>(c.x);
            data[i + 1] = static_cast<float>(c.y);
            data[i + 2] = static_cast<float>(c.z);
        }
    write_pfm_rows(path, img.width, img.height, data);
}

void write_pfm(const std::string& path, const FloatImage& img) {
    write_pfm_rows(path, img.width, img.height, img.rgb);
}

void write_variance_pfm(const std::string& path, const ImageAccumulator& img) {
    std::vector<float> data(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            Vec3 c = img.variance_of_mean(x, y);
            std::size_t i = (static_cast<std::size_t>(y) * img.width + x) * 3;
            data[i] = static_cast<float>(c.x);
            data[i + 1] = static_cast<float>(c.y);
            data[i + 2] = static_cast<float>(c.z);
        }
    write_pfm_rows(path, img.width, img.height, data);
}

FloatImage read_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ImageError("cannot open: " + path);
    std::string magic;
    f >> magic;
    if (magic != "PF") throw ImageError("not a color PFM file: " + path);
    int width = 0, height = 0;
    double scale = 0.0;
    f >> width >> height >> scale;
    if (!f || width < 1 || height < 1) throw ImageError("bad PFM header: " + path);
    if (scale >= 0.0) throw ImageError("big-endian PFM is not supported: " + path);
    f.get();  // single whitespace after the scale line

    FloatImage img;
    img.width = width;
    img.height = height;
    img.rgb.resize(static_cast<std::size_t>(width) * height * 3);
    for (int y = height - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char*>(&img.rgb[static_cast<std::size_t>(y) * width * 3]),
               static_cast<std::streamsize>(static_cast<std::size_t>(width) * 3 * sizeof(float)));
        if (!f) throw ImageError("unexpected end of PFM data: " + path);
    }
    return img;
}

}  // namespace tetvol
