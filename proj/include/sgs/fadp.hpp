#pragma once

#include "sgs/image.hpp"
#include "sgs/renderer.hpp"
#include "sgs/scene.hpp"

#include <string>
#include <vector>

namespace sgs {

struct EdgeMap {
    int width = 0, height = 0;
    std::vector<uint8_t> mask; // row-major booleans
    std::string detector;
    double threshold_high = 0;

    bool at(int x, int y) const { return mask[static_cast<size_t>(y) * width + x] != 0; }
    size_t edge_count() const;
};

// Sobel magnitude + non-maximum suppression + hysteresis; the high threshold
// is the 90th percentile of the nonzero gradient magnitudes, low = high / 2.
EdgeMap detect_edges(const Image& image);

// min(budget, edge count) distinct edge pixels, uniform without replacement,
// deterministic per seed (Fisher-Yates order).
std::vector<std::pair<int, int>> sample_edge_points(const EdgeMap& edges, size_t budget,
                                                    unsigned seed);

// Pinhole inverse through the depth map; pixels with alpha <= 0.5 are
// skipped. Returns world-space points.
std::vector<Vec3> backproject(const std::vector<std::pair<int, int>>& pixels,
                              const Image& depth, const Image& alpha,
                              const Camera& camera);

// One new splat per point, attributes inherited from the K nearest existing
// splats by inverse-distance weighting (epsilon 1e-8); existing splats are
// untouched.
void spawn_gaussians(const std::vector<Vec3>& points, GaussianField& field, size_t k);

struct PatchCounts {
    std::vector<long long> counts; // m*m entries, row-major patches
    int m = 0;
    int width = 0, height = 0;
};

// Patch membership by projected 2D mean (clamped into the image), in-frustum
// splats only. Also returns each splat's patch (-1 when out of frustum).
PatchCounts count_patches(const Projection& proj, const Camera& camera, int m,
                          std::vector<int>* splat_patch = nullptr);

struct RebalanceParams {
    double tau_sparse, tau_low, tau_high;
    double lambda_low, lambda_high;
    long long c_min;
};

// Piecewise reweighting, global renormalization with round-half-up, then a
// residual correction so the total count is conserved exactly.
std::vector<long long> rebalance_counts(const std::vector<long long>& counts,
                                        const RebalanceParams& params);

// Percentile-derived thresholds: tau_sparse at the 90% rank and tau_high at
// the 10% rank of patches sorted by density descending; tau_low at 50%.
RebalanceParams default_thresholds(const std::vector<long long>& counts,
                                   double lambda_low, double lambda_high,
                                   long long c_min);

struct DensityPlan {
    std::vector<long long> current;            // C
    std::vector<long long> target;             // C'
    std::vector<std::vector<size_t>> prune;    // per patch, splat indices
    std::vector<long long> spawn;              // per patch, count to add
    int m = 0;

    bool empty() const;
};

DensityPlan plan_density(const GaussianField& field, const Camera& camera,
                         const std::vector<long long>& target, int m);

struct ApplyReport {
    size_t pruned = 0;
    size_t spawned = 0;
    size_t skipped_patches = 0; // spawn patches with no valid depth pixel
    // Pre-spawn indices actually removed. When spawning falls short (skipped
    // patches), prunes are cancelled one-for-one against the shortfall so the
    // event never shrinks the field below what it adds back; the retained
    // candidates are those with the highest activated opacity.
    std::vector<size_t> pruned_indices;
};

ApplyReport apply_plan(GaussianField& field, const DensityPlan& plan,
                       const Image& depth, const Image& alpha, const EdgeMap& edges,
                       const Camera& camera, size_t k, unsigned seed);

} // namespace sgs
