#pragma once

#include "procsplat/math.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace procsplat {

constexpr int kMaxShDegree = 2;
constexpr int kDefaultShDegree = 1;
constexpr double kShC0 = 0.28209479177387814;
constexpr double kShC1 = 0.4886025119029199;
constexpr std::array<double, 5> kShC2 = {1.0925484305920792, -1.0925484305920792,
                                         0.31539156525252005, -1.0925484305920792,
                                         0.5462742152960396};

/// Screen-space variance added to every projected covariance (pixels^2).
constexpr double kLowPassFloor = 0.3;
constexpr double kDefaultNearPlane = 0.01;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Degree for a coefficient count; -1 when the count is not a square <= 9.
int sh_degree_for(std::size_t coeff_count);

/// One splat. Rotation is an unnormalized (w, x, y, z) quaternion, scale lives in
/// log space and opacity in logit space. `sh` holds one RGB triple per basis function.
struct Gaussian3D {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = identity_quat();
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    std::vector<Vec3> sh = std::vector<Vec3>(sh_coeff_count(kDefaultShDegree), Vec3::Zero());

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }
    Mat3 rotation_matrix() const { return quat_to_matrix(rotation); }
    int sh_degree() const { return sh_degree_for(sh.size()); }

    bool operator==(const Gaussian3D&) const = default;
};

/// Pinhole camera. world_to_camera maps world points into a frame looking down +z
/// with +x right and +y down in the image.
struct Camera {
    Mat4 world_to_camera = Mat4::Identity();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    Vec3 center() const { return -rotation().transpose() * translation(); }

    /// Throws InvalidParameter unless the rotation block is orthonormal and fx, fy > 0.
    void validate() const;

    /// Camera at `eye` looking at `target`; `up` is the approximate world up vector.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx,
                          double fy, int width, int height);

    bool operator==(const Camera&) const = default;
};

struct Gaussian2D {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    Vec3 color = Vec3::Zero();
    double alpha = 0.0;
    double depth = 0.0;
};

/// R diag(s)^2 R^T for a (possibly unnormalized) quaternion and positive scales.
Mat3 covariance3d(const Vec4& rotation, const Vec3& scale);

/// exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)).
double eval_density(const Gaussian3D& g, const Vec3& x);

/// Real SH basis values Y_k(dir) for k < (degree+1)^2, 3D-GS sign convention.
void sh_basis(int degree, const Vec3& dir, std::span<double> out);

/// d Y_k / d dir, treating dir as an unconstrained vector.
void sh_basis_grad(int degree, const Vec3& dir, std::span<Vec3> out);

/// 0.5 + sum_k sh[k] * Y_k(dir). Throws ShapeError on an invalid coefficient count.
Vec3 sh_color(std::span<const Vec3> sh, const Vec3& view_dir);

/// EWA projection. Returns nullopt when the center is not beyond the near plane.
/// `sh_frame` rotates world view directions into the frame the SH coefficients
/// are expressed in (d_local = sh_frame^T d).
std::optional<Gaussian2D> project(const Gaussian3D& g, const Camera& cam,
                                  const Mat3& sh_frame = Mat3::Identity(),
                                  double near_plane = kDefaultNearPlane,
                                  double low_pass = kLowPassFloor);

}  // namespace procsplat
