#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tetvol/camera.hpp"
#include "tetvol/errors.hpp"
#include "tetvol/tet_grid.hpp"
#include "tetvol/volume.hpp"

namespace tetvol {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BuildConfig {
    double variation_threshold = 0.1;  // refine while (max - min) / mean exceeds this
    int max_level = 24;                // refinement depth cap, <= the structural cap
    bool use_camera = false;
    double pixel_threshold = 1.0;      // skip refining tets projecting smaller than this
    double density_scale = 1.0;        // extinction = scale * mean density

    void validate() const;  // throws ConfigError
};

struct BuildStats {
    std::size_t leaf_count = 0;
    int max_depth = 0;
    double seconds = 0.0;
    std::size_t criterion_splits = 0;    // refinements whose own criteria fired
    std::size_t propagation_splits = 0;  // extra bisections forced by conformity
    std::vector<TetId> criterion_split_ids;  // the tets whose criteria fired, in order
};

// Ownership-based leaf statistics: every voxel center belongs to exactly one
// leaf (boundary ties resolve exactly as locate_point does), so the two
// children of a split partition their parent's voxel set. Used for the
// refinement criterion and payload assignment.
DensityStats density_stats_in_tet(const DenseVolume& vol, const TetGrid& grid, TetId leaf,
                                  const std::string& channel = "density");

// Worklist refinement from the 24 roots, ascending (level, id). A leaf splits
// iff variation > threshold AND level < maxLevel AND (when useCamera: inside
// the frustum AND projected size > pixelThreshold); conformity propagation
// overrides the criteria. Payloads are assigned before returning.
TetGrid build_adaptive_grid(const DenseVolume& vol, const BuildConfig& cfg,
                            const PinholeCamera* camera = nullptr, BuildStats* stats = nullptr);

// Leaf media from the volume: density = densityScale * mean over the leaf's
// voxel centers; temperature/albedo means when those channels exist; trilinear
// centroid fallback for sub-voxel leaves.
void assign_payloads(TetGrid& grid, const DenseVolume& vol, const BuildConfig& cfg);

void save_grid(const TetGrid& grid, const std::string& path);
TetGrid load_grid(const std::string& path);

}  // namespace tetvol
