#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tetvol/camera.hpp"
#include "tetvol/errors.hpp"
#include "tetvol/geometry.hpp"
#include "tetvol/image.hpp"
#include "tetvol/rng.hpp"
#include "tetvol/tet_grid.hpp"

namespace tetvol {

struct RenderConfig {
    int spp = 32;
    int max_bounces = 64;
    std::uint64_t seed = 0;
    double hg_g = 0.0;              // Henyey-Greenstein anisotropy, in (-1, 1)
    double default_albedo = 0.8;    // used when a cell has no albedo of its own
    Vec3 environment{1.0, 1.0, 1.0};  // radiance of escaped rays
    double emission_scale = 1.0;    // multiplies the temperature-driven emission
    double exposure = 1.0;          // tonemap controls for 8-bit output
    double gamma = 2.2;

    void validate() const;  // throws ConfigError
};

struct TraceStats {
    std::uint64_t cells_visited = 0;
    std::uint64_t degenerate_paths = 0;
};

struct ExitFace {
    int slot = -1;  // face index in the tet (opposite verts[slot])
    double t = 0.0;  // distance from the query position along the direction
};

// Exit face of a cell for a ray starting at pos (inside the cell) along dir:
// among faces with dot(outward normal, dir) > 0, the smallest plane distance
// wins; ties resolve to the smaller face index. nullopt when no face qualifies
// (numerically degenerate configuration).
std::optional<ExitFace> exit_face(const TetGrid& grid, TetId cell, const Vec3& pos, const Vec3& dir);

// Piecewise-constant cells crossed by the ray through the grid, in order.
// Consecutive segments share endpoints exactly; the union tiles the chord
// through the cube. Degenerate paths are truncated (and counted in stats).
std::vector<RaySegment> march_segments(const TetGrid& grid, const Ray& ray, TraceStats* stats = nullptr);

// Beer-Lambert transmittance exp(-integral of extinction) along the ray.
double march_transmittance(const TetGrid& grid, const Ray& ray, TraceStats* stats = nullptr);

struct FreePathSample {
    bool collided = false;
    Vec3 position;        // collision point, or the point where the ray left the grid
    TetId cell = kNoTet;  // cell containing the collision (when collided)
    double distance = 0.0;  // ray parameter of the event
};

// Regular-tracking free-path sampling: tau = -ln(1 - xi) against the
// piecewise-constant extinction field (one uniform draw from rng).
FreePathSample sample_free_path(const TetGrid& grid, const Ray& ray, RngStream& rng, TraceStats* stats = nullptr);

// Henyey-Greenstein phase function sampling around dir (2 uniform draws:
// cosine then azimuth). g = 0 degenerates to the isotropic phase function.
Vec3 sample_phase_hg(const Vec3& dir, double g, RngStream& rng);
// Scalar inversion behind it: the sampled scattering cosine for uniform xi.
double hg_sample_cos(double g, double xi);
double hg_pdf(double cos_theta, double g);

// Blackbody-style lookup, monotone per channel from (0,0,0) at t = 0 through
// red and orange to (1,1,1) at t = 1; t is clamped to [0,1].
Vec3 emission_color(double temperature);

// Radiance along one ray (volumetric path tracing with regular tracking,
// Russian roulette from bounce 4 when max throughput drops below 1e-3).
Vec3 trace(const TetGrid& grid, const Ray& ray, const RenderConfig& cfg, RngStream& rng,
           TraceStats* stats = nullptr);

// Full-frame render. threads <= 0 selects the hardware concurrency. The result
// is bit-identical for any thread count (sample streams are keyed on pixel and
// sample index alone).
ImageAccumulator render(const TetGrid& grid, const PinholeCamera& camera, const RenderConfig& cfg,
                        int threads = 0);

}  // namespace tetvol
