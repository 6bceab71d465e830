#include "procsplat/assembly.hpp"
#include "procsplat/error.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace procsplat;
using procsplat::test_support::random_gaussian;
using procsplat::test_support::largest_remainder;
using procsplat::test_support::random_transform;

namespace {

std::vector<AssetSpec> boxes(const std::vector<Vec3>& extents) {
    std::vector<AssetSpec> m;
    for (std::size_t i = 0; i < extents.size(); ++i) m.push_back({"A" + std::to_string(i), extents[i], Vec3::Zero()});
    return m;
}

std::vector<AssetSpec> random_manifest(Rng& rng, int m) {
    std::uniform_real_distribution<double> logv(std::log(0.05), std::log(5.0));
    std::vector<Vec3> ext;
    for (int i = 0; i < m; ++i) ext.push_back({std::exp(logv(rng)), std::exp(logv(rng)), std::exp(logv(rng))});
    return boxes(ext);
}

}  // namespace

TEST(AllocatePoints, ExactRatios) {
    EXPECT_EQ(allocate_points(boxes({{1, 1, 1}, {1, 1, 1}, {1, 1, 2}}), 8), (std::vector<int>{2, 2, 4}));
}

TEST(AllocatePoints, TiesGoToLowerIndex) {
    EXPECT_EQ(allocate_points(boxes({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}), 10), (std::vector<int>{4, 3, 3}));
}

TEST(AllocatePoints, SingleAssetTakesDefaultBudget) {
    EXPECT_EQ(allocate_points(boxes({{0.5, 2, 3}}), 10000), (std::vector<int>{10000}));
}

TEST(AllocatePoints, ErrorsAndFloor) {
    EXPECT_THROW(allocate_points(boxes({{1, 1, 1}, {1, 1, 1}}), 1), InvalidParameter);
    EXPECT_THROW(allocate_points({}, 10), InvalidParameter);
    // A tiny asset still gets one point.
    const auto c = allocate_points(boxes({{10, 10, 10}, {0.01, 0.01, 0.01}}), 5);
    EXPECT_EQ(c, (std::vector<int>{4, 1}));
}

TEST(AllocatePoints, ApportionmentProperties) {
    // Manifests where every quota is at least one point, so the one-point floor
    // never has to move points between assets.
    Rng rng(1234);
    std::uniform_int_distribution<int> msize(1, 8);
    std::uniform_real_distribution<double> side(0.3, 3.0);
    std::uniform_int_distribution<int> budget(1, 20000);
    int trials = 0, default_budget = 0;
    while (trials < 1000) {
        std::vector<Vec3> ext(msize(rng));
        for (auto& e : ext) e = {side(rng), side(rng), side(rng)};
        const auto manifest = boxes(ext);
        double vsum = 0.0, vmin = 1e300;
        for (const auto& s : manifest) {
            vsum += s.volume();
            vmin = std::min(vmin, s.volume());
        }
        const int floor_budget = static_cast<int>(std::ceil(vsum / vmin));
        const int total = (trials % 10 == 0) ? 10000 : budget(rng);
        if (total < floor_budget) continue;
        ++trials;
        default_budget += total == 10000;
        const auto counts = allocate_points(manifest, total);
        ASSERT_EQ(counts.size(), manifest.size());
        EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), 0), total);
        for (std::size_t i = 0; i < manifest.size(); ++i) {
            const double quota = total * manifest[i].volume() / vsum;
            EXPECT_LE(std::abs(counts[i] - quota), 1.0) << "trial " << trials << " asset " << i;
        }
        EXPECT_EQ(counts, largest_remainder(manifest, total)) << "trial " << trials;
    }
    EXPECT_GE(default_budget, 100);
}

TEST(AllocatePoints, OnePointFloorUnderExtremeRatios) {
    // Tiny assets get one point each; the points come out of larger assets, which
    // can then sit more than one point below their quota.
    Rng rng(99);
    std::uniform_int_distribution<int> msize(2, 12);
    std::uniform_int_distribution<int> budget(1, 2000);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto manifest = random_manifest(rng, msize(rng));
        const int m = static_cast<int>(manifest.size());
        const int total = std::max(m, budget(rng));
        const auto counts = allocate_points(manifest, total);
        double vsum = 0.0;
        for (const auto& s : manifest) vsum += s.volume();
        int floored = 0;
        for (int i = 0; i < m; ++i) floored += total * manifest[i].volume() / vsum < 1.0;
        EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), 0), total);
        for (int i = 0; i < m; ++i) {
            const double quota = total * manifest[i].volume() / vsum;
            EXPECT_GE(counts[i], 1);
            EXPECT_LE(counts[i], std::ceil(quota) + 1e-9);
            EXPECT_GE(counts[i], std::floor(quota) - floored);
        }
    }
}

TEST(InitBaseAsset, UniformStatisticsAndDeterminism) {
    const AssetSpec spec{"box", {1, 1, 1}, {0.5, 0.5, 0.5}};
    Rng rng(7);
    const BaseAsset a = init_base_asset(spec, 1000, rng);
    ASSERT_EQ(a.gaussians.size(), 1000u);
    Vec3 mean = Vec3::Zero();
    for (const auto& g : a.gaussians) {
        EXPECT_TRUE(local_box(spec).contains(g.position));
        EXPECT_TRUE(g.scale().allFinite());
        EXPECT_GT(g.opacity(), 0.0);
        EXPECT_LT(g.opacity(), 1.0);
        EXPECT_EQ(static_cast<int>(g.sh.size()), sh_coeff_count(kDefaultShDegree));
        mean += g.position / 1000.0;
    }
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(mean[k], 0.5, 0.05);

    Rng r1(99), r2(99);
    EXPECT_EQ(init_base_asset(spec, 50, r1).gaussians, init_base_asset(spec, 50, r2).gaussians);

    Rng r3(1);
    const BaseAsset one = init_base_asset(spec, 1, r3);
    ASSERT_EQ(one.gaussians.size(), 1u);
    const Vec3 p = one.gaussians[0].position;
    EXPECT_TRUE((p.array() > 0.0).all() && (p.array() < 1.0).all());
    EXPECT_THROW(init_base_asset(spec, 0, r3), InvalidParameter);
    EXPECT_THROW(init_base_asset(spec, 5, r3, 3), InvalidParameter);
}

TEST(InitVarianceAssets, OnePerPlacement) {
    const AssetSpec spec{"W", {1, 0.3, 1}, Vec3::Zero()};
    InstantiationList list(3, Instantiation{"W", {}, std::nullopt});
    list.push_back({"C", {}, std::nullopt});
    Rng rng(4);
    const auto vars = init_variance_assets(spec, list, 6, rng);
    ASSERT_EQ(vars.size(), 3u);
    for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(vars[k].owner_asset_id, "W");
        EXPECT_EQ(vars[k].instance_index, k);
        EXPECT_EQ(vars[k].gaussians.size(), 6u);
        for (const auto& g : vars[k].gaussians) EXPECT_TRUE(local_box(spec).contains(g.position));
    }
    Rng a(5), b(5);
    const auto va = init_variance_assets(spec, list, 4, a), vb = init_variance_assets(spec, list, 4, b);
    for (int k = 0; k < 3; ++k) EXPECT_EQ(va[k].gaussians, vb[k].gaussians);
}

TEST(InitFromPoints, PullbackAndStrideDownsampling) {
    const AssetSpec spec{"A", {1, 1, 1}, Vec3::Zero()};
    Rng rng(17);
    std::uniform_real_distribution<double> u(-0.49, 0.49);
    // K=1, identity: every in-box point survives.
    std::vector<Vec3> pts;
    for (int i = 0; i < 100; ++i) pts.push_back({u(rng), u(rng), u(rng)});
    InstantiationList one{{"A", {}, std::nullopt}};
    auto r1 = init_from_points(spec, one, pts, 10, rng);
    EXPECT_FALSE(r1.fell_back);
    EXPECT_EQ(r1.asset.gaussians.size(), 100u);

    // K=4 translated copies, 250 points each: about 250 kept after stride-4 sampling.
    InstantiationList four;
    std::vector<Vec3> cloud;
    for (int k = 0; k < 4; ++k) {
        InstanceTransform t;
        t.T = {3.0 * k, 0.0, 0.0};
        four.push_back({"A", t, std::nullopt});
        for (int i = 0; i < 250; ++i) cloud.push_back(t.apply({u(rng), u(rng), u(rng)}));
    }
    auto r4 = init_from_points(spec, four, cloud, 10, rng);
    EXPECT_EQ(r4.gathered, 1000u);
    EXPECT_EQ(r4.asset.gaussians.size(), 250u);
    for (const auto& g : r4.asset.gaussians) EXPECT_TRUE(local_box(spec).contains(g.position));

    // Nothing inside any box: uniform fallback.
    const std::vector<Vec3> far{{100, 100, 100}};
    auto rf = init_from_points(spec, one, far, 12, rng);
    EXPECT_TRUE(rf.fell_back);
    EXPECT_EQ(rf.asset.gaussians.size(), 12u);
}

TEST(Instantiate, IdentityIsExactFixpoint) {
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        Gaussian3D g = random_gaussian(rng, 2);
        const double n = g.rotation.norm();
        g.rotation /= n;
        EXPECT_EQ(instantiate(g, InstanceTransform{}), g);
    }
}

TEST(Instantiate, TranslationOnly) {
    Rng rng(6);
    const Gaussian3D g = random_gaussian(rng, 1);
    InstanceTransform t;
    t.T = {0, 0, 5};
    const Gaussian3D h = instantiate(g, t);
    EXPECT_LT((h.position - g.position - Vec3(0, 0, 5)).norm(), 1e-15);
    EXPECT_LT((covariance3d(h.rotation, h.scale()) - covariance3d(g.rotation, g.scale())).cwiseAbs().maxCoeff(),
              1e-14);
}

TEST(Instantiate, RigidDensityConsistency) {
    Rng rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Gaussian3D g = random_gaussian(rng, 1);
        InstanceTransform t = random_transform(rng);
        t.S = Vec3::Ones();
        const Gaussian3D h = instantiate(g, t);
        for (int j = 0; j < 10; ++j) {
            const Vec3 x = g.position + 0.3 * Vec3(u(rng), u(rng), u(rng));
            worst = std::max(worst, std::abs(eval_density(h, t.R * x + t.T) - eval_density(g, x)));
        }
        EXPECT_EQ(h.opacity_logit, g.opacity_logit);
        EXPECT_EQ(h.sh, g.sh);
    }
    EXPECT_LE(worst, 1e-9);
}

TEST(Instantiate, CompositionMatchesAffineMatrix) {
    Rng rng(41);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Gaussian3D g = random_gaussian(rng, 1);
        const InstanceTransform t = random_transform(rng);
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) m(r, c) = t.R(r, c) * t.S[c];
            m(r, 3) = t.T[r];
        }
        const Eigen::Vector4d hp = m * g.position.homogeneous();
        const Gaussian3D h = instantiate(g, t);
        worst = std::max(worst, (h.position - hp.head<3>()).cwiseAbs().maxCoeff());
        EXPECT_LT((t.matrix() - m).cwiseAbs().maxCoeff(), 1e-15);
        // Rotation composes, scale multiplies.
        EXPECT_LT((quat_to_matrix(h.rotation) - t.R * quat_to_matrix(g.rotation)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((h.scale() - t.S.cwiseProduct(g.scale())).cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_LE(worst, 1e-9);
}

TEST(Assemble, CountsAndProvenance) {
    const AssetSpec spec{"A", {1, 1, 1}, Vec3::Zero()};
    Rng rng(8);
    const BaseAsset base = init_base_asset(spec, 10, rng);
    InstantiationList list;
    for (int k = 0; k < 3; ++k) {
        InstanceTransform t;
        t.T = {2.0 * k, 0, 0};
        list.push_back({"A", t, k});
    }
    const auto vars = init_variance_assets(spec, list, 2, rng);
    const std::vector<BaseAsset> bases{base};
    const Scene scene = assemble(list, bases, vars);
    EXPECT_EQ(scene.size(), 36u);
    EXPECT_EQ(scene.instances.size(), 3u);
    for (std::size_t e = 0; e < scene.size(); ++e) {
        const Provenance& p = scene.provenance[e];
        const auto& src = p.source == Source::Base ? base.gaussians[p.local_index]
                                                   : vars[p.variance_slot].gaussians[p.local_index];
        EXPECT_EQ(scene.gaussians[e], instantiate(src, list[p.instance_index].transform));
    }
    const Disassembly d = disassemble(scene);
    ASSERT_EQ(d.bases.size(), 1u);
    for (std::size_t i = 0; i < 10; ++i)
        EXPECT_LT((d.bases[0][i].position - base.gaussians[i].position).norm(), 1e-12);

    // Without variances only base copies remain.
    InstantiationList plain = list;
    for (auto& inst : plain) inst.variance_index.reset();
    EXPECT_EQ(assemble(plain, bases, {}).size(), 30u);

    InstantiationList dangling = list;
    dangling[1].asset_id = "missing";
    EXPECT_THROW(assemble(dangling, bases, vars), ResolveError);
    EXPECT_THROW(assemble(list, bases, {}), ResolveError);
}

TEST(WorldBbox, IdentityQuarterTurnAndCornerOracle) {
    const AssetSpec spec{"A", {2, 1, 1}, {0.1, 0.2, 0.3}};
    const Box3 id = world_bbox(spec, {});
    EXPECT_LT((id.min - spec.box_min()).norm(), 1e-15);
    EXPECT_LT((id.max - spec.box_max()).norm(), 1e-15);

    InstanceTransform quarter;
    quarter.R = rotation_z(0.5 * std::numbers::pi);
    EXPECT_LT((world_bbox({"B", {2, 1, 1}, Vec3::Zero()}, quarter).extent() - Vec3(1, 2, 1)).norm(), 1e-12);

    Rng rng(12);
    for (int i = 0; i < 100; ++i) {
        const InstanceTransform t = random_transform(rng);
        Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
        for (int c = 0; c < 8; ++c) {
            const Vec3 corner((c & 1) ? spec.box_max().x() : spec.box_min().x(),
                              (c & 2) ? spec.box_max().y() : spec.box_min().y(),
                              (c & 4) ? spec.box_max().z() : spec.box_min().z());
            const Vec3 w = t.apply(corner);
            lo = lo.cwiseMin(w);
            hi = hi.cwiseMax(w);
        }
        const Box3 b = world_bbox(spec, t);
        EXPECT_LT((b.min - lo).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((b.max - hi).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(NearestNeighbor, ScalesFromSpacing) {
    const std::vector<Vec3> pts{{0, 0, 0}, {0.5, 0, 0}, {0, 0, 2}};
    const auto ls = nearest_neighbor_log_scales(pts, 1.0);
    ASSERT_EQ(ls.size(), 3u);
    EXPECT_NEAR(ls[0], std::log(0.5), 1e-12);
    EXPECT_NEAR(ls[1], std::log(0.5), 1e-12);
    EXPECT_NEAR(ls[2], std::log(1.0), 1e-12);  // 2.0 clamped to max_scale
}
