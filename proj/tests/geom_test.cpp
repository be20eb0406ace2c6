#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "icoreg/error.hpp"
#include "icoreg/geom.hpp"
#include "icoreg/kdtree.hpp"

using namespace icoreg;
using namespace icoreg::geom;

namespace {

PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

// Random samples of a bumpy, non-symmetric height field over [-1, 1]^2,
// about one point per spacing^2.
PointCloud bumpy_surface(double spacing, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto n = static_cast<std::size_t>(4.0 / (spacing * spacing));
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(rng), y = u(rng);
    c.points.emplace_back(x, y, 0.3 * std::sin(2.1 * x + 0.4) * std::cos(1.3 * y) + 0.2 * x * x * y +
                                0.08 * std::sin(9.0 * x) * std::sin(7.0 * y + 1.0));
  }
  return c;
}

// Kolmogorov survival function for the KS statistic.
double ks_p_value(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) sum += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(sum, 0.0, 1.0);
}

}  // namespace

TEST(GeomTransform, IdentityAndInverse) {
  std::mt19937_64 rng(1);
  const PointCloud p = random_cloud(rng, 100, 2.0);
  const PointCloud same = apply_transform(RigidTransform::identity(), p);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_LE((same.points[i] - p.points[i]).norm(), 1e-12);
  const RigidTransform t = random_transform(5, std::numbers::pi, 3.0);
  const PointCloud back = apply_transform(t.inverse(), apply_transform(t, p));
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_LE((back.points[i] - p.points[i]).norm(), 1e-9);
}

TEST(GeomTransform, HandComputedQuarterTurn) {
  RigidTransform t;
  t.rotation = axis_angle(Vec3::UnitZ(), std::numbers::pi / 2.0);
  t.translation = Vec3(0, 0, 1);
  EXPECT_LE((t(Vec3(1, 0, 0)) - Vec3(0, 1, 1)).norm(), 1e-15);
}

TEST(GeomKabsch, IdenticalSetsGiveIdentity) {
  std::mt19937_64 rng(2);
  const PointCloud p = random_cloud(rng, 10, 1.0);
  const RigidTransform t = kabsch(p.points, p.points);
  EXPECT_LE(rotation_angle(t.rotation), 1e-9);
  EXPECT_LE(t.translation.norm(), 1e-12);
}

TEST(GeomKabsch, RecoversTransformFromNoiseFreeTriplets) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const RigidTransform t = random_transform(1000 + trial, std::numbers::pi, 5.0);
    const PointCloud src = random_cloud(rng, 3, 1.0);
    const PointCloud dst = apply_transform(t, src);
    const RigidTransform est = kabsch(src.points, dst.points);
    EXPECT_LE(rotation_distance(est.rotation, t.rotation), 1e-9);
    EXPECT_LE((est.translation - t.translation).norm(), 1e-9);
  }
}

TEST(GeomKabsch, NoisyResidualWithinThreeSigma) {
  std::mt19937_64 rng(4);
  const double sigma = 0.01;
  std::normal_distribution<double> noise(0.0, sigma);
  for (int trial = 0; trial < 100; ++trial) {
    const RigidTransform t = random_transform(2000 + trial, std::numbers::pi, 2.0);
    const PointCloud src = random_cloud(rng, 50, 1.0);
    PointCloud dst = apply_transform(t, src);
    for (Vec3& q : dst.points) q += Vec3(noise(rng), noise(rng), noise(rng));
    const RigidTransform est = kabsch(src.points, dst.points);
    double sse = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) sse += (est(src.points[i]) - dst.points[i]).squaredNorm();
    EXPECT_LE(std::sqrt(sse / src.size()), 3.0 * sigma);
  }
}

TEST(GeomKabsch, DegenerateInputThrows) {
  const std::vector<Vec3> line = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
  const std::vector<Vec3> dup = {Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(1, 1, 1)};
  const std::vector<Vec3> two = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  for (const auto* pts : {&line, &dup}) {
    try {
      kabsch(*pts, *pts);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kDegenerateGeometry);
    }
  }
  EXPECT_THROW(kabsch(two, two), Error);
}

TEST(GeomKabsch, RecoversTransformForAnyNonDegenerateSet) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const RigidTransform t = random_transform(3000 + trial, std::numbers::pi, 1.0);
    const PointCloud src = random_cloud(rng, 4 + trial, 0.5);
    const RigidTransform est = kabsch(src.points, apply_transform(t, src).points);
    EXPECT_LE(rotation_distance(est.rotation, t.rotation), 1e-9);
  }
}

TEST(GeomIcp, AlreadyAlignedReturnsInit) {
  const PointCloud p = bumpy_surface(0.05);
  const IcpResult r = icp(p, p, RigidTransform::identity());
  EXPECT_LE(r.iterations, 1);
  EXPECT_EQ(r.transform.rotation, Mat3::Identity());
  EXPECT_EQ(r.transform.translation, Vec3::Zero());
}

TEST(GeomIcp, ConvergesFromNearbyInitialization) {
  const double voxel = 0.05;
  const PointCloud p = bumpy_surface(0.5 * voxel);
  const RigidTransform gt = random_transform(11, std::numbers::pi, 1.0);
  const PointCloud q = apply_transform(gt, p);
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    // Perturb by <= 5 degrees and <= 0.1 * extent (extent = 2 m).
    const RigidTransform delta = random_transform(100 + trial, 5.0 * std::numbers::pi / 180.0, 0.2 / std::sqrt(3.0));
    const RigidTransform init = delta * gt;
    const IcpResult r = icp(p, q, init);
    EXPECT_LE(r.rmse_trace.back(), 0.01 * voxel) << "trial " << trial << " iters " << r.iterations << " start " << r.rmse_trace.front();
    for (std::size_t i = 1; i < r.rmse_trace.size(); ++i) EXPECT_LE(r.rmse_trace[i], r.rmse_trace[i - 1]);
  }
}

TEST(GeomIcp, TruncatedCostIsMonotoneAndNeverWorseThanInit) {
  const PointCloud p = bumpy_surface(0.04);
  PointCloud q = apply_transform(random_transform(21, 1.0, 0.5), p);
  std::mt19937_64 rng(22);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (Vec3& x : q.points) x += Vec3(noise(rng), noise(rng), noise(rng));
  q.points.resize(q.size() * 2 / 3);  // partial overlap
  IcpOptions opt;
  opt.max_correspondence_distance = 0.1;
  for (int trial = 0; trial < 5; ++trial) {
    const RigidTransform init = random_transform(300 + trial, 0.3, 0.3);
    const IcpResult r = icp(p, q, init, opt);
    for (std::size_t i = 1; i < r.rmse_trace.size(); ++i) EXPECT_LE(r.rmse_trace[i], r.rmse_trace[i - 1]);
    EXPECT_LE(r.rmse_trace.back(), r.rmse_trace.front());
  }
}

TEST(GeomIcp, EmptyCloudThrows) {
  PointCloud empty, one;
  one.points.emplace_back(0, 0, 0);
  EXPECT_THROW(icp(empty, one, {}), Error);
  EXPECT_THROW(icp(one, empty, {}), Error);
}

TEST(GeomVoxel, Basics) {
  std::mt19937_64 rng(6);
  const PointCloud p = random_cloud(rng, 500, 1.0);
  PointCloud shifted = p;
  for (Vec3& x : shifted.points) x += Vec3(5, 5, 5);  // bounding box inside voxel (0,0,0)
  EXPECT_EQ(voxel_downsample(shifted, 10.0).size(), 1u);
  PointCloud two;
  two.points = {Vec3(0.1, 0.1, 0.1), Vec3(0.3, 0.5, 0.2)};
  const PointCloud d = voxel_downsample(two, 1.0);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_LE((d.points[0] - Vec3(0.2, 0.3, 0.15)).norm(), 1e-15);
  for (double v : {0.05, 0.1, 0.3}) {
    const PointCloud once = voxel_downsample(p, v);
    EXPECT_LE(once.size(), p.size());
    const PointCloud twice = voxel_downsample(once, v);
    ASSERT_EQ(twice.size(), once.size());
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(twice.points[i], once.points[i]);
  }
  EXPECT_THROW(voxel_downsample(p, 0.0), Error);
  EXPECT_THROW(voxel_downsample(p, -1.0), Error);
}

TEST(GeomPlanarity, PlaneRejectedBallKept) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud plane;
  for (int i = 0; i < 2000; ++i) plane.points.emplace_back(u(rng), u(rng), 0.0);
  plane.points.emplace_back(0, 0, 0);
  const std::vector<std::size_t> center = {plane.size() - 1};
  EXPECT_TRUE(planarity_filter(plane, center, 0.5).empty());

  // Isotropic Gaussian ball: covariance eigenvalues ≈ σ²/r² each, well above
  // the threshold for σ = 0.3 r (0.09, truncated at the radius).
  PointCloud ball;
  std::normal_distribution<double> g(0.0, 0.3);
  ball.points.emplace_back(0, 0, 0);
  for (int i = 0; i < 3000; ++i) ball.points.emplace_back(g(rng), g(rng), g(rng));
  const std::vector<std::size_t> c0 = {0};
  const KdTree tree = make_kdtree(ball);
  const double ev = neighborhood_min_eigenvalue(ball, tree, 0, 1.0);
  // Oracle: truncated-Gaussian variance per axis, estimated from the samples directly.
  double var = 0.0;
  std::size_t n = 0;
  for (const Vec3& p : ball.points)
    if (p.norm() < 1.0) {
      var += p.squaredNorm() / 3.0;
      ++n;
    }
  var /= static_cast<double>(n);
  EXPECT_NEAR(ev, var, 0.15 * var);
  EXPECT_EQ(planarity_filter(ball, c0, 1.0), c0);
}

TEST(GeomPlanarity, ZeroThresholdKeepsNonEmpty) {
  std::mt19937_64 rng(8);
  PointCloud p = random_cloud(rng, 300, 1.0);
  p.points.emplace_back(50, 50, 50);  // isolated
  std::vector<std::size_t> all(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) all[i] = i;
  const auto kept = planarity_filter(p, all, 0.5, 0.0);
  EXPECT_EQ(kept.size(), p.size() - 1);
  EXPECT_EQ(std::find(kept.begin(), kept.end(), p.size() - 1), kept.end());
}

TEST(GeomRandomTransform, ZeroAngleAndDeterminism) {
  EXPECT_EQ(random_transform(9, 0.0, 1.0).rotation, Mat3::Identity());
  const RigidTransform a = random_transform(10, 1.0, 1.0), b = random_transform(10, 1.0, 1.0);
  EXPECT_EQ(a.rotation, b.rotation);
  EXPECT_EQ(a.translation, b.translation);
  EXPECT_LE(a.translation.cwiseAbs().maxCoeff(), 1.0);
}

TEST(GeomRandomTransform, AngleDistributionIsUniform) {
  const double max_angle = 2.0;
  const std::size_t n = 100000;
  std::vector<double> angles;
  angles.reserve(n);
  for (std::size_t i = 0; i < n; ++i) angles.push_back(rotation_angle(random_transform(i, max_angle, 0.0).rotation));
  std::sort(angles.begin(), angles.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cdf = angles[i] / max_angle;
    d = std::max({d, cdf - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - cdf});
  }
  EXPECT_GT(ks_p_value(d, n), 0.01) << "KS D = " << d;
}

TEST(KdTree, MatchesLinearScan) {
  std::mt19937_64 rng(13);
  for (std::size_t dim : {3u, 8u, 32u}) {
    std::uniform_int_distribution<int> coarse(0, 3);  // many exact ties
    std::vector<double> coords(500 * dim);
    for (double& c : coords) c = coarse(rng);
    const KdTree tree(coords, dim);
    for (int q = 0; q < 100; ++q) {
      std::vector<double> query(dim);
      for (double& c : query) c = coarse(rng) + 0.5 * (q % 2);
      std::size_t best = 0;
      double best_d = 1e300;
      std::vector<std::size_t> within;
      for (std::size_t i = 0; i < 500; ++i) {
        double d = 0.0;
        for (std::size_t a = 0; a < dim; ++a) d += (coords[i * dim + a] - query[a]) * (coords[i * dim + a] - query[a]);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
        if (d < 4.0) within.push_back(i);
      }
      const auto [idx, dist] = tree.nearest(query);
      EXPECT_EQ(idx, best);
      EXPECT_EQ(dist, best_d);
      EXPECT_EQ(tree.radius_search(query, 2.0), within);
    }
  }
}
