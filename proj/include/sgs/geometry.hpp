#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>

namespace sgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Quaternions stored as (w,x,y,z).
inline Vec4 quat_normalize(const Vec4& q) { return q / q.norm(); }

inline Mat3 quat_to_matrix(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

inline Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
    return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

inline Vec4 axis_angle_to_quat(const Vec3& aa) {
    const double theta = aa.norm();
    if (theta < 1e-12) {
        Vec4 q(1.0, 0.5 * aa[0], 0.5 * aa[1], 0.5 * aa[2]);
        return quat_normalize(q);
    }
    const double half = 0.5 * theta;
    const Vec3 axis = aa / theta;
    return Vec4(std::cos(half), std::sin(half) * axis[0], std::sin(half) * axis[1],
                std::sin(half) * axis[2]);
}

inline Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v[2], v[1], v[2], 0, -v[0], -v[1], v[0], 0;
    return m;
}

inline Mat3 axis_angle_to_matrix(const Vec3& aa) {
    const double theta = aa.norm();
    const Mat3 k = skew(aa);
    if (theta < 1e-8) {
        return Mat3::Identity() + k + 0.5 * k * k;
    }
    const double t2 = theta * theta;
    return Mat3::Identity() + (std::sin(theta) / theta) * k +
           ((1.0 - std::cos(theta)) / t2) * (k * k);
}

// Left Jacobian of SO(3): exp(w + dw) ~= exp(Jl(w) dw) * exp(w).
inline Mat3 so3_left_jacobian(const Vec3& aa) {
    const double theta = aa.norm();
    const Mat3 k = skew(aa);
    if (theta < 1e-8) {
        return Mat3::Identity() + 0.5 * k + (1.0 / 6.0) * k * k;
    }
    const double t2 = theta * theta, t3 = t2 * theta;
    return Mat3::Identity() + ((1.0 - std::cos(theta)) / t2) * k +
           ((theta - std::sin(theta)) / t3) * (k * k);
}

// d(R(q_hat))/dq for a raw (not necessarily unit) quaternion: returns the
// gradient w.r.t. the raw q given dL/dR, with normalization included.
inline Vec4 quat_rotation_backward(const Vec4& q_raw, const Mat3& dL_dR) {
    const Vec4 q = quat_normalize(q_raw);
    const double w = q[0], x = q[1], y = q[2], z = q[3];

    // Partials of R w.r.t. the unit quaternion components.
    Mat3 dRdw, dRdx, dRdy, dRdz;
    dRdw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
    dRdx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
    dRdy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
    dRdz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;

    Vec4 g_unit(dL_dR.cwiseProduct(dRdw).sum(), dL_dR.cwiseProduct(dRdx).sum(),
                dL_dR.cwiseProduct(dRdy).sum(), dL_dR.cwiseProduct(dRdz).sum());

    // Through normalization: q = q_raw / |q_raw|.
    const double n = q_raw.norm();
    return (g_unit - q * q.dot(g_unit)) / n;
}

} // namespace sgs
