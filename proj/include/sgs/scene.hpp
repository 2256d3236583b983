#pragma once

#include "sgs/errors.hpp"
#include "sgs/geometry.hpp"

#include <cstdint>
#include <vector>

namespace sgs {

// Explicit scene representation. All per-splat parameters are stored in
// optimization (pre-activation) space; activation happens at render time.
struct GaussianField {
    std::vector<Vec3> positions;
    std::vector<Vec3> log_scales;
    std::vector<Vec4> rotations; // unit quaternions (w,x,y,z)
    std::vector<double> opacity_logits;
    std::vector<Vec3> colors; // raw, sigmoid-activated to [0,1]

    // Bumped on every mutation; render outputs record it to detect staleness.
    uint64_t mutation_counter = 0;

    size_t count() const { return positions.size(); }

    void resize(size_t n) {
        positions.resize(n, Vec3::Zero());
        log_scales.resize(n, Vec3::Zero());
        rotations.resize(n, Vec4(1, 0, 0, 0));
        opacity_logits.resize(n, 0.0);
        colors.resize(n, Vec3::Zero());
        ++mutation_counter;
    }

    void renormalize_rotations() {
        for (auto& q : rotations) q = quat_normalize(q);
    }

    // Remove splats flagged in `mask`; preserves the order of the survivors.
    void remove_masked(const std::vector<bool>& mask);
};

struct ActivatedView {
    std::vector<Vec3> scales;    // exp(log_scale)
    std::vector<double> opacities; // sigmoid(logit)
    std::vector<Vec3> rgb;       // sigmoid(raw color)
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ActivatedView activate(const GaussianField& field);

struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    Vec4 rotation = Vec4(1, 0, 0, 0); // world-to-camera
    Vec3 translation = Vec3::Zero();
    bool learnable = false;
    Vec6 delta = Vec6::Zero(); // axis-angle (0..2) + translation offset (3..5)

    bool intrinsics_equal(const Camera& o) const {
        return fx == o.fx && fy == o.fy && cx == o.cx && cy == o.cy &&
               width == o.width && height == o.height;
    }
};

// Effective world-to-camera pose after applying the learnable delta:
// R_eff = exp(aa) * R_base, t_eff = t_base + offset.
struct EffectivePose {
    Mat3 rotation;
    Vec3 translation;
};
EffectivePose compose_delta(const Camera& camera);

// Immutable nearest-neighbor snapshot over one field's positions.
// Queries agree exactly with exhaustive search (ties broken by lower index).
class SpatialIndex {
public:
    explicit SpatialIndex(const GaussianField& field);
    explicit SpatialIndex(const std::vector<Vec3>& points);

    size_t size() const { return points_.size(); }
    const Vec3& point(size_t i) const { return points_[i]; }

    // k results sorted by (distance, index) ascending.
    std::vector<std::pair<size_t, double>> k_nearest(const Vec3& query, size_t k) const;

    // Convenience: nearest single neighbor distance.
    double nearest_distance(const Vec3& query) const {
        return k_nearest(query, 1)[0].second;
    }

private:
    struct Node {
        int axis = -1;       // -1 for leaf
        double split = 0;
        int left = -1, right = -1;
        uint32_t begin = 0, end = 0; // leaf point range into order_
    };

    void build(int node, uint32_t begin, uint32_t end, int depth);

    std::vector<Vec3> points_;
    std::vector<uint32_t> order_;
    std::vector<Node> nodes_;
};

std::vector<std::pair<size_t, double>> brute_force_k_nearest(
    const std::vector<Vec3>& points, const Vec3& query, size_t k);

inline SpatialIndex build_index(const GaussianField& field) {
    if (field.count() == 0) throw EmptyField();
    return SpatialIndex(field);
}

} // namespace sgs
