#include "sgs/pose.hpp"

#include <cmath>

namespace sgs {

Vec4 slerp(const Vec4& q0, const Vec4& q1_in, double alpha) {
    if (std::abs(q0.norm() - 1.0) > 1e-6 || std::abs(q1_in.norm() - 1.0) > 1e-6)
        throw InvalidQuaternion();

    Vec4 q1 = q1_in;
    double dot = q0.dot(q1);
    if (dot < 0) { // shortest arc
        q1 = -q1;
        dot = -dot;
    }
    dot = std::min(dot, 1.0);
    const double theta = std::acos(dot);
    if (theta < 1e-6) {
        return quat_normalize((1.0 - alpha) * q0 + alpha * q1);
    }
    const double s = std::sin(theta);
    const Vec4 out =
        (std::sin((1.0 - alpha) * theta) / s) * q0 + (std::sin(alpha * theta) / s) * q1;
    return quat_normalize(out);
}

Camera interpolate_pose(const Camera& a, const Camera& b, double alpha) {
    if (!a.intrinsics_equal(b)) throw IntrinsicsMismatch();
    Camera c = a;
    c.rotation = slerp(quat_normalize(a.rotation), quat_normalize(b.rotation), alpha);
    c.translation = (1.0 - alpha) * a.translation + alpha * b.translation;
    c.learnable = true;
    c.delta.setZero();
    return c;
}

PoseTrack build_track(const std::vector<Camera>& cameras, int factor) {
    if (cameras.size() < 2) throw InsufficientViews();
    if (factor < 2) throw Error("interpolation factor must be >= 2");
    PoseTrack track;
    track.training = cameras;
    track.factor = factor;
    for (size_t n = 0; n + 1 < cameras.size(); ++n) {
        for (int k = 1; k < factor; ++k) {
            const double alpha = static_cast<double>(k) / factor;
            track.interpolated.push_back(
                {interpolate_pose(cameras[n], cameras[n + 1], alpha), n, alpha});
        }
    }
    return track;
}

} // namespace sgs
