#include "tetvol/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace tetvol {

static_assert(std::endian::native == std::endian::little, "file formats are little-endian");

DenseVolume::DenseVolume(int nx, int ny, int nz) : nx_(nx), ny_(ny), nz_(nz) {
    if (nx < 1 || ny < 1 || nz < 1) throw VolumeError("volume dimensions must be positive");
    names_.push_back("density");
    data_.emplace_back(voxel_count(), 0.0f);
}

bool DenseVolume::has_channel(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::vector<float>& DenseVolume::add_channel(const std::string& name) {
    if (name.empty() || name.size() > 255) throw VolumeError("bad channel name");
    if (has_channel(name)) throw VolumeError("channel already exists: " + name);
    names_.push_back(name);
    data_.emplace_back(voxel_count(), 0.0f);
    return data_.back();
}

const std::vector<float>& DenseVolume::channel(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return data_[i];
    throw UnknownChannel("unknown channel: " + name);
}

std::vector<float>& DenseVolume::channel(const std::string& name) {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return data_[i];
    throw UnknownChannel("unknown channel: " + name);
}

double DenseVolume::trilinear_sample(const Vec3& p, const std::string& name) const {
    return trilinear_sample(p, channel(name));
}

double DenseVolume::trilinear_sample(const Vec3& p, const std::vector<float>& data) const {
    double fx = p.x * nx_ - 0.5, fy = p.y * ny_ - 0.5, fz = p.z * nz_ - 0.5;
    int i0 = static_cast<int>(std::floor(fx));
    int j0 = static_cast<int>(std::floor(fy));
    int k0 = static_cast<int>(std::floor(fz));
    double tx = fx - i0, ty = fy - j0, tz = fz - k0;
    auto cl = [](int v, int n) { return std::clamp(v, 0, n - 1); };
    int i1 = cl(i0 + 1, nx_), j1 = cl(j0 + 1, ny_), k1 = cl(k0 + 1, nz_);
    i0 = cl(i0, nx_);
    j0 = cl(j0, ny_);
    k0 = cl(k0, nz_);
    auto v = [&](int i, int j, int k) { return static_cast<double>(data[index(i, j, k)]); };
    double c00 = v(i0, j0, k0) * (1 - tx) + v(i1, j0, k0) * tx;
    double c10 = v(i0, j1, k0) * (1 - tx) + v(i1, j1, k0) * tx;
    double c01 = v(i0, j0, k1) * (1 - tx) + v(i1, j0, k1) * tx;
    double c11 = v(i0, j1, k1) * (1 - tx) + v(i1, j1, k1) * tx;
    double c0 = c00 * (1 - ty) + c10 * ty;
    double c1 = c01 * (1 - ty) + c11 * ty;
    return c0 * (1 - tz) + c1 * tz;
}

namespace {

template <class T>
void write_raw(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw VolumeError("unexpected end of file");
    return v;
}

}  // namespace

void DenseVolume::save_dvol(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw VolumeError("cannot open for writing: " + path);
    f.write("DVOL", 4);
    write_raw<std::uint32_t>(f, 1u);
    write_raw<std::uint32_t>(f, static_cast<std::uint32_t>(nx_));
    write_raw<std::uint32_t>(f, static_cast<std::uint32_t>(ny_));
    write_raw<std::uint32_t>(f, static_cast<std::uint32_t>(nz_));
    write_raw<std::uint32_t>(f, static_cast<std::uint32_t>(names_.size()));
    for (const std::string& n : names_) {
        write_raw<std::uint8_t>(f, static_cast<std::uint8_t>(n.size()));
        f.write(n.data(), static_cast<std::streamsize>(n.size()));
    }
    for (const auto& d : data_)
        f.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(float)));
    if (!f) throw VolumeError("write failed: " + path);
}

DenseVolume DenseVolume::load_dvol(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw VolumeError("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "DVOL", 4) != 0) throw VolumeError("not a DVOL file: " + path);
    if (read_raw<std::uint32_t>(f) != 1u) throw VolumeError("unsupported DVOL version");
    std::uint32_t nx = read_raw<std::uint32_t>(f);
    std::uint32_t ny = read_raw<std::uint32_t>(f);
    std::uint32_t nz = read_raw<std::uint32_t>(f);
    std::uint32_t nch = read_raw<std::uint32_t>(f);
    if (nx < 1 || ny < 1 || nz < 1 || nx > 4096 || ny > 4096 || nz > 4096) throw VolumeError("bad dimensions");
    if (nch < 1 || nch > 16) throw VolumeError("bad channel count");

    DenseVolume vol;
    vol.nx_ = static_cast<int>(nx);
    vol.ny_ = static_cast<int>(ny);
    vol.nz_ = static_cast<int>(nz);
    for (std::uint32_t c = 0; c < nch; ++c) {
        std::uint8_t len = read_raw<std::uint8_t>(f);
        if (len == 0) throw VolumeError("empty channel name");
        std::string name(len, '\0');
        f.read(name.data(), len);
        if (!f) throw VolumeError("unexpected end of file");
        if (vol.has_channel(name)) throw VolumeError("duplicate channel name: " + name);
        vol.names_.push_back(name);
    }
    const std::size_t n = vol.voxel_count();
    for (std::uint32_t c = 0; c < nch; ++c) {
        std::vector<float> d(n);
        f.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(n * sizeof(float)));
        if (!f) throw VolumeError("unexpected end of file in channel data");
        vol.data_.push_back(std::move(d));
    }
    return vol;
}

TetPlanes::TetPlanes(const std::array<Vec3, 4>& corners) {
    for (int slot = 0; slot < 4; ++slot) {
        Vec3 p0 = corners[(slot + 1) & 3], p1 = corners[(slot + 2) & 3], p2 = corners[(slot + 3) & 3];
        Vec3 nn = normalize(cross(p1 - p0, p2 - p0));
        if (dot(nn, corners[slot] - p0) > 0.0) nn = -nn;
        n[slot] = nn;
        d[slot] = dot(nn, p0);
    }
}

CenterRange centers_in_aabb(const DenseVolume& vol, const Vec3& lo, const Vec3& hi) {
    CenterRange r{};
    const int dims[3] = {vol.nx(), vol.ny(), vol.nz()};
    for (int a = 0; a < 3; ++a) {
        // center (i + 0.5)/n in [lo, hi]
        r.lo[a] = std::max(0, static_cast<int>(std::ceil(lo[a] * dims[a] - 0.5 - 1e-12)));
        r.hi[a] = std::min(dims[a] - 1, static_cast<int>(std::floor(hi[a] * dims[a] - 0.5 + 1e-12)));
    }
    return r;
}

DensityStats density_stats_in_tet(const DenseVolume& vol, const std::array<Vec3, 4>& corners,
                                  const std::string& channel) {
    const std::vector<float>& data = vol.channel(channel);
    Vec3 lo = corners[0], hi = corners[0];
    for (int i = 1; i < 4; ++i) {
        lo = {std::min(lo.x, corners[i].x), std::min(lo.y, corners[i].y), std::min(lo.z, corners[i].z)};
        hi = {std::max(hi.x, corners[i].x), std::max(hi.y, corners[i].y), std::max(hi.z, corners[i].z)};
    }
    const TetPlanes planes(corners);
    const CenterRange r = centers_in_aabb(vol, lo, hi);

    DensityStats s;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (int k = r.lo[2]; k <= r.hi[2]; ++k)
        for (int j = r.lo[1]; j <= r.hi[1]; ++j)
            for (int i = r.lo[0]; i <= r.hi[0]; ++i) {
                if (!planes.contains(vol.voxel_center(i, j, k), 1e-12)) continue;
                double v = data[vol.index(i, j, k)];
                s.min = std::min(s.min, v);
                s.max = std::max(s.max, v);
                sum += v;
                ++s.count;
            }
    if (s.count == 0) {
        Vec3 centroid = (corners[0] + corners[1] + corners[2] + corners[3]) * 0.25;
        double v = vol.trilinear_sample(centroid, data);
        s.min = s.max = s.mean = v;
    } else {
        s.mean = sum / static_cast<double>(s.count);
    }
    return s;
}

double variation_metric(const DensityStats& s) {
    if (s.mean == 0.0) return 0.0;
    return (s.max - s.min) / s.mean;
}

}  // namespace tetvol
