#include "procsplat/error.hpp"
#include "procsplat/splat.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace procsplat;
using procsplat::test_support::random_gaussian;

namespace {

constexpr double kPi = std::numbers::pi;

Vec4 axis_angle(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized() * std::sin(0.5 * angle);
    return {std::cos(0.5 * angle), a.x(), a.y(), a.z()};
}

// Real SH basis written out from the normalization constants, independent of the
// tabulated constants in the library.
std::vector<double> sh_table(const Vec3& d) {
    const double x = d.x(), y = d.y(), z = d.z();
    const double c0 = 0.5 * std::sqrt(1.0 / kPi);
    const double c1 = std::sqrt(3.0 / (4.0 * kPi));
    const double c2a = 0.5 * std::sqrt(15.0 / kPi);
    const double c2b = 0.25 * std::sqrt(5.0 / kPi);
    const double c2c = 0.25 * std::sqrt(15.0 / kPi);
    return {c0,
            -c1 * y,
            c1 * z,
            -c1 * x,
            c2a * x * y,
            -c2a * y * z,
            c2b * (2.0 * z * z - x * x - y * y),
            -c2a * x * z,
            c2c * (x * x - y * y)};
}

Vec2 pinhole(const Camera& cam, const Vec3& world) {
    const Vec3 p = cam.rotation() * world + cam.translation();
    return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

Camera axis_camera(double f, double c, int size) {
    Camera cam;
    cam.fx = cam.fy = f;
    cam.cx = cam.cy = c;
    cam.width = cam.height = size;
    return cam;
}

}  // namespace

TEST(Covariance, IdentityAndAxisAligned) {
    EXPECT_TRUE(covariance3d(identity_quat(), Vec3::Ones()).isApprox(Mat3::Identity(), 1e-15));
    const Mat3 c = covariance3d(identity_quat(), {2.0, 1.0, 1.0});
    EXPECT_TRUE(c.isApprox(Vec3(4.0, 1.0, 1.0).asDiagonal().toDenseMatrix(), 1e-15));
}

TEST(Covariance, QuarterTurnAboutZ) {
    Mat3 r;
    r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Mat3 expected = r * Vec3(4.0, 1.0, 1.0).asDiagonal() * r.transpose();
    const Mat3 c = covariance3d(axis_angle(Vec3::UnitZ(), 0.5 * kPi), {2.0, 1.0, 1.0});
    EXPECT_LT((c - expected).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR(c(0, 0), 1.0, 1e-14);
    EXPECT_NEAR(c(1, 1), 4.0, 1e-14);
}

TEST(Covariance, SignAndNormInvariance) {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const Gaussian3D g = random_gaussian(rng, 0);
        const Mat3 a = covariance3d(g.rotation, g.scale());
        EXPECT_LT((a - covariance3d(-g.rotation, g.scale())).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_LT((a - covariance3d(3.7 * g.rotation, g.scale())).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_LT((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-15);
        Eigen::SelfAdjointEigenSolver<Mat3> es(a);
        EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    }
}

TEST(Covariance, RejectsBadInput) {
    EXPECT_THROW(covariance3d(identity_quat(), {1.0, 0.0, 1.0}), InvalidParameter);
    EXPECT_THROW(covariance3d(identity_quat(), {1.0, NAN, 1.0}), InvalidParameter);
    EXPECT_THROW(covariance3d(Vec4::Zero(), Vec3::Ones()), InvalidParameter);
}

TEST(Density, PeakAndUnitMahalanobis) {
    Gaussian3D g;
    g.position = {0.3, -0.2, 1.0};
    EXPECT_EQ(eval_density(g, g.position), 1.0);
    Gaussian3D unit;
    EXPECT_NEAR(eval_density(unit, {1.0, 0.0, 0.0}), std::exp(-0.5), 1e-15);
}

TEST(Density, AnisotropicMatchesExplicitInverse) {
    Rng rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const Gaussian3D g = random_gaussian(rng, 0);
        const Vec3 x = g.position + 0.3 * Vec3(u(rng), u(rng), u(rng));
        // Cofactor inverse of R diag(s^2) R^T built from the rotation matrix directly.
        const Mat3 r = g.rotation_matrix();
        const Vec3 s = g.scale();
        Mat3 cov = Mat3::Zero();
        for (int k = 0; k < 3; ++k) cov += s[k] * s[k] * r.col(k) * r.col(k).transpose();
        Mat3 adj;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                const int a1 = (b + 1) % 3, a2 = (b + 2) % 3, b1 = (a + 1) % 3, b2 = (a + 2) % 3;
                adj(a, b) = cov(a1, b1) * cov(a2, b2) - cov(a1, b2) * cov(a2, b1);
            }
        const double det = cov.row(0).dot(adj.col(0));
        const Vec3 d = x - g.position;
        const double expected = std::exp(-0.5 * d.dot(adj * d) / det);
        EXPECT_NEAR(eval_density(g, x), expected, 1e-12 * std::max(1.0, expected));
    }
}

TEST(Density, FrameEquivariance) {
    Rng rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        Gaussian3D g = random_gaussian(rng, 0);
        const Vec4 q = axis_angle(Vec3(u(rng), u(rng), u(rng)) + Vec3(0, 0, 1.5), 3.0 * u(rng));
        Gaussian3D h = g;
        h.rotation = quat_multiply(q, g.rotation);
        h.position = quat_to_matrix(q) * g.position;
        const Vec3 x = g.position + 0.4 * Vec3(u(rng), u(rng), u(rng));
        EXPECT_NEAR(eval_density(h, quat_to_matrix(q) * x), eval_density(g, x), 1e-12);
    }
}

TEST(ShColor, DegreeZeroConvention) {
    const std::vector<Vec3> sh{Vec3::Zero()};
    EXPECT_EQ(sh_color(sh, Vec3::UnitZ()), Vec3::Constant(0.5));
    const std::vector<Vec3> dc{{0.3, -0.4, 1.0}};
    const Vec3 a = sh_color(dc, Vec3(1, 2, 3).normalized());
    const Vec3 b = sh_color(dc, Vec3(-3, 0.5, -1).normalized());
    EXPECT_EQ(a, b);
    EXPECT_NEAR(a.x(), 0.5 + 0.3 * 0.28209479177, 1e-11);
}

TEST(ShColor, MatchesBasisTable) {
    Rng rng(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int degree = 0; degree <= kMaxShDegree; ++degree) {
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<Vec3> sh(sh_coeff_count(degree));
            for (auto& c : sh) c = {u(rng), u(rng), u(rng)};
            const Vec3 dir = Vec3(u(rng), u(rng), u(rng)).normalized();
            const auto y = sh_table(dir);
            Vec3 expected = Vec3::Constant(0.5);
            for (std::size_t k = 0; k < sh.size(); ++k) expected += y[k] * sh[k];
            EXPECT_LT((sh_color(sh, dir) - expected).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(ShColor, BasisGradientMatchesDifferences) {
    const Vec3 dir = Vec3(0.3, -0.5, 0.8).normalized();
    std::vector<Vec3> grad(9);
    sh_basis_grad(2, dir, grad);
    const double h = 1e-6;
    for (int axis = 0; axis < 3; ++axis) {
        Vec3 p = dir, m = dir;
        p[axis] += h;
        m[axis] -= h;
        std::vector<double> yp(9), ym(9);
        sh_basis(2, p, yp);
        sh_basis(2, m, ym);
        for (int k = 0; k < 9; ++k) EXPECT_NEAR(grad[k][axis], (yp[k] - ym[k]) / (2 * h), 1e-8);
    }
}

TEST(ShColor, BadCoefficientCount) {
    const std::vector<Vec3> sh(5, Vec3::Zero());
    EXPECT_THROW(sh_color(sh, Vec3::UnitZ()), ShapeError);
    EXPECT_EQ(sh_degree_for(4), 1);
    EXPECT_EQ(sh_degree_for(16), -1);
}

TEST(Project, PrincipalPoint) {
    const Camera cam = axis_camera(100.0, 50.0, 100);
    Gaussian3D g;
    g.position = {0.0, 0.0, 1.0};
    const auto p = project(g, cam);
    ASSERT_TRUE(p.has_value());
    EXPECT_EQ(p->mean2d, Vec2(50.0, 50.0));
    EXPECT_EQ(p->depth, 1.0);
}

TEST(Project, IsotropicCovariance) {
    const Camera cam = axis_camera(100.0, 50.0, 100);
    Gaussian3D g;
    g.position = {0.0, 0.0, 2.0};
    g.log_scale = Vec3::Constant(std::log(0.1));
    const auto p = project(g, cam);
    ASSERT_TRUE(p.has_value());
    const double v = std::pow(100.0 * 0.1 / 2.0, 2) + kLowPassFloor;
    EXPECT_NEAR(p->cov2d(0, 0), v, 1e-12);
    EXPECT_NEAR(p->cov2d(1, 1), v, 1e-12);
    EXPECT_NEAR(p->cov2d(0, 1), 0.0, 1e-12);
}

TEST(Project, BehindCameraIsCulled) {
    const Camera cam = axis_camera(100.0, 50.0, 100);
    Gaussian3D g;
    g.position = {0.0, 0.0, -1.0};
    EXPECT_FALSE(project(g, cam).has_value());
    g.position = {0.0, 0.0, 0.5 * kDefaultNearPlane};
    EXPECT_FALSE(project(g, cam).has_value());
}

TEST(Project, MatchesPinholeAndNumericJacobian) {
    Rng rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const Camera cam = procsplat::test_support::orbit_camera(3.0 * u(rng), 0.6 * u(rng), 4.0, 64, 48, 60.0);
        const Gaussian3D g = random_gaussian(rng, 1);
        const auto p = project(g, cam);
        ASSERT_TRUE(p.has_value());
        EXPECT_LT((p->mean2d - pinhole(cam, g.position)).norm(), 1e-9);
        // Jacobian of the world-to-pixel map by central differences.
        Eigen::Matrix<double, 2, 3> jac;
        const double h = 1e-5;
        for (int k = 0; k < 3; ++k) {
            Vec3 a = g.position, b = g.position;
            a[k] += h;
            b[k] -= h;
            jac.col(k) = (pinhole(cam, a) - pinhole(cam, b)) / (2 * h);
        }
        const Mat2 expected =
            jac * covariance3d(g.rotation, g.scale()) * jac.transpose() + kLowPassFloor * Mat2::Identity();
        EXPECT_LT((p->cov2d - expected).cwiseAbs().maxCoeff(), 1e-6 * expected.cwiseAbs().maxCoeff());
        EXPECT_NEAR(p->depth, (cam.rotation() * g.position + cam.translation()).z(), 1e-12);
        EXPECT_GT(p->cov2d.determinant(), 0.0);
    }
}

TEST(CameraModel, ValidateAndLookAt) {
    const Camera cam = Camera::look_at({3, 0, 1}, Vec3::Zero(), Vec3::UnitZ(), 50, 50, 32, 32);
    EXPECT_NO_THROW(cam.validate());
    EXPECT_LT((cam.center() - Vec3(3, 0, 1)).norm(), 1e-12);
    const Vec3 target_cam = cam.rotation() * Vec3::Zero() + cam.translation();
    EXPECT_NEAR(target_cam.x(), 0.0, 1e-12);
    EXPECT_NEAR(target_cam.y(), 0.0, 1e-12);
    EXPECT_GT(target_cam.z(), 0.0);
    Camera bad = cam;
    bad.world_to_camera(0, 0) += 1e-6;
    EXPECT_THROW(bad.validate(), InvalidParameter);
    bad = cam;
    bad.fx = 0.0;
    EXPECT_THROW(bad.validate(), InvalidParameter);
}
