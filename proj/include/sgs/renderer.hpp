#pragma once

#include "sgs/image.hpp"
#include "sgs/scene.hpp"

#include <cstdint>
#include <vector>

namespace sgs {

// Global render worker cap. Work is split into a fixed number of row bands
// reduced in band order, so results are bit-identical for any thread count.
void set_render_threads(int threads);
int render_threads();

struct ProjectedSplat {
    Vec2 mean = Vec2::Zero(); // pixel coordinates
    Mat2 cov = Mat2::Zero();  // 2D covariance after the +0.3 diagonal floor
    Mat2 conic = Mat2::Zero();
    double depth = 0.0; // camera-space z
    bool in_frustum = false;
    // Cached intermediates for the backward pass.
    Vec3 x_cam = Vec3::Zero();
    Mat23 jacobian = Mat23::Zero();
    Mat3 cov3d = Mat3::Zero();  // world-space covariance
    Mat3 cov_cam = Mat3::Zero(); // camera-space covariance (pre-projection)
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1; // inclusive pixel bbox
};

struct Projection {
    std::vector<ProjectedSplat> splats;
    EffectivePose pose;
};

// Splats behind the near plane (z <= 0.01) are flagged out-of-frustum.
Projection project(const Camera& camera, const GaussianField& field);

struct RenderOutput {
    Image rgb;   // H x W x 3
    Image depth; // H x W x 1, composited with the color weights
    Image alpha; // H x W x 1
    Vec3 background = Vec3::Zero();
    // Per-pixel splat ids actually composited, front-to-back order (CSR:
    // pixel p owns contrib_splats[contrib_offsets[p] .. contrib_offsets[p+1])).
    std::vector<uint32_t> contrib_offsets;
    std::vector<uint32_t> contrib_splats;
    Projection projection;
    uint64_t field_mutation_counter = 0;
};

RenderOutput render(const GaussianField& field, const Camera& camera,
                    const Vec3& background);

struct GradientBundle {
    std::vector<Vec3> positions;
    std::vector<Vec3> log_scales;
    std::vector<Vec4> rotations;
    std::vector<double> opacity_logits;
    std::vector<Vec3> colors;
    // Screen-space mean gradient norm, the densification statistic.
    std::vector<double> screen_grad;
    Vec6 camera_delta = Vec6::Zero();
    bool has_camera_delta = false;

    void resize(size_t n) {
        positions.assign(n, Vec3::Zero());
        log_scales.assign(n, Vec3::Zero());
        rotations.assign(n, Vec4::Zero());
        opacity_logits.assign(n, 0.0);
        colors.assign(n, Vec3::Zero());
        screen_grad.assign(n, 0.0);
    }
};

// Analytic adjoint of render. grad_depth may be empty (treated as zero).
GradientBundle render_backward(const GaussianField& field, const Camera& camera,
                               const RenderOutput& output, const Image& grad_rgb,
                               const Image& grad_depth);

constexpr double kNearPlane = 0.01;
constexpr double kTransmittanceFloor = 1e-4;
constexpr double kCovarianceFloor = 0.3;

} // namespace sgs
