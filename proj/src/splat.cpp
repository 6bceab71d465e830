#include "procsplat/splat.hpp"

#include "procsplat/error.hpp"

#include <cmath>
#include <string>

namespace procsplat {

int sh_degree_for(std::size_t coeff_count) {
    for (int d = 0; d <= kMaxShDegree; ++d) {
        if (static_cast<std::size_t>(sh_coeff_count(d)) == coeff_count) return d;
    }
    return -1;
}

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidParameter("camera focal lengths must be positive");
    if (!world_to_camera.allFinite()) throw InvalidParameter("camera pose is not finite");
    const Mat3 r = rotation();
    const double err = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (err > 1e-9) throw InvalidParameter("camera rotation is not orthonormal");
    if (width < 0 || height < 0) throw InvalidParameter("camera image size is negative");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx,
                       double fy, int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitX());
    right.normalize();
    const Vec3 down = forward.cross(right);
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    Camera cam;
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.topLeftCorner<3, 3>() = r;
    cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    return cam;
}

Mat3 covariance3d(const Vec4& rotation, const Vec3& scale) {
    if (!rotation.allFinite() || !scale.allFinite())
        throw InvalidParameter("covariance3d: non-finite input");
    if ((scale.array() <= 0.0).any()) throw InvalidParameter("covariance3d: scale must be positive");
    const double n = rotation.norm();
    if (!(n > 0.0)) throw InvalidParameter("covariance3d: zero quaternion");
    const Mat3 m = unit_quat_to_matrix(rotation / n) * scale.asDiagonal();
    return m * m.transpose();
}

double eval_density(const Gaussian3D& g, const Vec3& x) {
    if (!x.allFinite() || !g.position.allFinite() || !g.log_scale.allFinite())
        throw InvalidParameter("eval_density: non-finite input");
    // Sigma^-1 = R diag(1/s^2) R^T, no explicit inverse needed.
    const Mat3 r = g.rotation_matrix();
    const Vec3 local = r.transpose() * (x - g.position);
    const Vec3 inv_s = (-g.log_scale).array().exp();
    const double m2 = local.cwiseProduct(inv_s).squaredNorm();
    return std::exp(-0.5 * m2);
}

void sh_basis(int degree, const Vec3& dir, std::span<double> out) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    out[0] = kShC0;
    if (degree < 1) return;
    out[1] = -kShC1 * y;
    out[2] = kShC1 * z;
    out[3] = -kShC1 * x;
    if (degree < 2) return;
    out[4] = kShC2[0] * x * y;
    out[5] = kShC2[1] * y * z;
    out[6] = kShC2[2] * (2.0 * z * z - x * x - y * y);
    out[7] = kShC2[3] * x * z;
    out[8] = kShC2[4] * (x * x - y * y);
}

void sh_basis_grad(int degree, const Vec3& dir, std::span<Vec3> out) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    out[0].setZero();
    if (degree < 1) return;
    out[1] = {0.0, -kShC1, 0.0};
    out[2] = {0.0, 0.0, kShC1};
    out[3] = {-kShC1, 0.0, 0.0};
    if (degree < 2) return;
    out[4] = {kShC2[0] * y, kShC2[0] * x, 0.0};
    out[5] = {0.0, kShC2[1] * z, kShC2[1] * y};
    out[6] = {-2.0 * kShC2[2] * x, -2.0 * kShC2[2] * y, 4.0 * kShC2[2] * z};
    out[7] = {kShC2[3] * z, 0.0, kShC2[3] * x};
    out[8] = {2.0 * kShC2[4] * x, -2.0 * kShC2[4] * y, 0.0};
}

Vec3 sh_color(std::span<const Vec3> sh, const Vec3& view_dir) {
    const int degree = sh_degree_for(sh.size());
    if (degree < 0)
        throw ShapeError("sh_color: " + std::to_string(sh.size()) +
                         " coefficients is not a supported SH layout");
    std::array<double, 9> basis{};
    sh_basis(degree, view_dir, basis);
    Vec3 c = Vec3::Constant(0.5);
    for (std::size_t k = 0; k < sh.size(); ++k) c += basis[k] * sh[k];
    return c;
}

std::optional<Gaussian2D> project(const Gaussian3D& g, const Camera& cam, const Mat3& sh_frame,
                                  double near_plane, double low_pass) {
    const Mat3 w = cam.rotation();
    const Vec3 t = w * g.position + cam.translation();
    if (!(t.z() > near_plane)) return std::nullopt;

    const double inv_z = 1.0 / t.z();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * inv_z, 0.0, -cam.fx * t.x() * inv_z * inv_z,
         0.0, cam.fy * inv_z, -cam.fy * t.y() * inv_z * inv_z;
    const Eigen::Matrix<double, 2, 3> jw = j * w;
    const Mat3 sigma = covariance3d(g.rotation, g.scale());

    Gaussian2D out;
    out.mean2d = {cam.fx * t.x() * inv_z + cam.cx, cam.fy * t.y() * inv_z + cam.cy};
    out.cov2d = jw * sigma * jw.transpose() + low_pass * Mat2::Identity();
    const Vec3 dir = (g.position - cam.center()).normalized();
    out.color = sh_color(g.sh, sh_frame.transpose() * dir);
    out.alpha = g.opacity();
    out.depth = t.z();
    return out;
}

}  // namespace procsplat
