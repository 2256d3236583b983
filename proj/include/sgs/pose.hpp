#pragma once

#include "sgs/scene.hpp"

#include <vector>

namespace sgs {

// Spherical linear interpolation between unit quaternions, shortest arc.
// Falls back to normalized lerp when the inter-quaternion angle < 1e-6 rad.
Vec4 slerp(const Vec4& q0, const Vec4& q1, double alpha);

// Interpolated camera per Eq.-style pose blending: slerp on rotation, lerp on
// translation; intrinsics copied; result is learnable with zero delta.
Camera interpolate_pose(const Camera& a, const Camera& b, double alpha);

struct InterpolatedCamera {
    Camera camera;
    size_t pair_index = 0; // interpolates between cameras[pair] and [pair+1]
    double alpha = 0.0;
};

struct PoseTrack {
    std::vector<Camera> training;
    std::vector<InterpolatedCamera> interpolated; // (S-1)*(N-1) entries
    int factor = 0;                               // S
};

// For each adjacent training pair, inserts S-1 cameras at alpha = k/S.
PoseTrack build_track(const std::vector<Camera>& cameras, int factor);

} // namespace sgs
