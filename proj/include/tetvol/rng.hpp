#pragma once

#include <cstdint>

namespace tetvol {

// Counter-based stream: every draw is a pure hash of (seed, pixel, sample, dimension).
// No mutable generator state is shared between pixels or samples, so renders are
// bit-identical for any thread count or pixel visit order.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t pixel, std::uint64_t sample)
        : key_(mix64(mix64(mix64(seed) ^ pixel) ^ sample)) {}

    // next dimension as a double in [0, 1)
    double next() {
        std::uint64_t h = mix64(key_ ^ (0xd1b54a32d192ed03ull * ++dim_));
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    }

    std::uint64_t dimension() const { return dim_; }

private:
    std::uint64_t key_;
    std::uint64_t dim_ = 0;
};

}  // namespace tetvol
