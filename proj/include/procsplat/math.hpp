#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>

namespace procsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Quaternions are stored as Vec4 in (w, x, y, z) order.
inline Vec4 identity_quat() { return {1.0, 0.0, 0.0, 0.0}; }

/// Hamilton product a * b.
inline Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
    return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

/// Matrix L(a) with quat_multiply(a, b) == L(a) * b.
inline Eigen::Matrix4d quat_left_matrix(const Vec4& a) {
    Eigen::Matrix4d m;
    m << a[0], -a[1], -a[2], -a[3],
         a[1],  a[0], -a[3],  a[2],
         a[2],  a[3],  a[0], -a[1],
         a[3], -a[2],  a[1],  a[0];
    return m;
}

/// Rotation matrix of a unit quaternion (no normalization).
inline Mat3 unit_quat_to_matrix(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// Rotation matrix of an arbitrary nonzero quaternion; normalizes first.
inline Mat3 quat_to_matrix(const Vec4& q) { return unit_quat_to_matrix(q / q.norm()); }

/// Pulls dL/dR back onto the unit quaternion that produced R.
inline Vec4 unit_quat_matrix_grad(const Vec4& q, const Mat3& g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 d;
    d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
                z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
    d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
    d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return d;
}

/// Pulls a gradient on q/|q| back onto q.
inline Vec4 normalize_grad(const Vec4& q, const Vec4& d_unit) {
    const double n = q.norm();
    const Vec4 u = q / n;
    return (d_unit - u * u.dot(d_unit)) / n;
}

inline Vec4 matrix_to_quat(const Mat3& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    return {q.w(), q.x(), q.y(), q.z()};
}

inline Mat3 rotation_z(double radians) {
    return Eigen::AngleAxisd(radians, Vec3::UnitZ()).toRotationMatrix();
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

}  // namespace procsplat
