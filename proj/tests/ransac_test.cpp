#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "icoreg/error.hpp"
#include "icoreg/parallel.hpp"
#include "icoreg/ransac.hpp"
#include "icoreg/synth.hpp"

namespace {

using namespace icoreg;
using namespace icoreg::ransac;
using pipeline::CorrespondenceSynthConfig;
using pipeline::synth_correspondences;

class QuietWarnings : public ::testing::Environment {
 public:
  void SetUp() override { set_warnings_enabled(false); }
};
const auto* const kQuiet = ::testing::AddGlobalTestEnvironment(new QuietWarnings);

CorrespondenceSynthConfig synth(std::size_t n, double alpha, std::uint64_t seed) {
  CorrespondenceSynthConfig cfg;
  cfg.count = n;
  cfg.inlier_ratio = alpha;
  cfg.seed = seed;
  return cfg;
}

Vec3 uniform_point(std::mt19937_64& rng, double half_width) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  return Vec3(u(rng), u(rng), u(rng));
}

RansacConfig config(Mode mode, std::size_t iters, std::uint64_t seed = 1) {
  RansacConfig cfg;
  cfg.mode = mode;
  cfg.max_iterations = iters;
  cfg.inlier_threshold = 0.05;
  cfg.seed = seed;
  return cfg;
}

TEST(CountInliers, GroundTruthCountsEveryNoiseFreeInlier) {
  const auto s = synth_correspondences(synth(300, 0.4, 1));
  const auto inliers = count_inliers(s.truth, s.correspondences, 1e-9);
  std::vector<std::size_t> expected;
  for (std::size_t i = 0; i < s.is_inlier.size(); ++i)
    if (s.is_inlier[i]) expected.push_back(i);
  EXPECT_EQ(inliers, expected);
}

TEST(CountInliers, ZeroThresholdOnNoisyDataIsEmpty) {
  auto cfg = synth(300, 1.0, 2);
  cfg.noise_sigma = 0.01;
  const auto s = synth_correspondences(cfg);
  EXPECT_TRUE(count_inliers(s.truth, s.correspondences, 0.0).empty());
}

TEST(CountInliers, MatchesBruteForceRecount) {
  auto cfg = synth(500, 0.3, 3);
  cfg.noise_sigma = 0.02;
  const auto s = synth_correspondences(cfg);
  const RigidTransform t = geom::random_transform(4, 0.1, 0.05) * s.truth;
  for (double tau : {0.01, 0.05, 0.2}) {
    std::vector<std::size_t> brute;
    for (std::size_t i = 0; i < s.correspondences.size(); ++i) {
      const auto& c = s.correspondences[i];
      const Vec3 d = t.rotation * c.p + t.translation - c.q;
      if (std::sqrt(d.x() * d.x() + d.y() * d.y() + d.z() * d.z()) <= tau) brute.push_back(i);
    }
    EXPECT_EQ(count_inliers(t, s.correspondences, tau), brute);
  }
}

TEST(RunRansac, AllInlierNoiseFreeRecoversTruthInThreeHypotheses) {
  const auto s = synth_correspondences(synth(100, 1.0, 5));
  for (Mode mode : {Mode::kVanilla, Mode::kCrv, Mode::kOse}) {
    for (bool refit : {false, true}) {
      RansacConfig cfg = config(mode, 3);
      cfg.refit = refit;
      const auto r = run_ransac(s.correspondences, cfg);
      EXPECT_LE(r.hypotheses_evaluated, 3u);
      EXPECT_LE(rotation_distance(r.transform.rotation, s.truth.rotation), 1e-6) << to_string(mode);
      EXPECT_LE((r.transform.translation - s.truth.translation).norm(), 1e-6) << to_string(mode);
      EXPECT_EQ(r.inlier_indices.size(), 100u);
    }
  }
}

TEST(RunRansac, OseEnumeratesEachCorrespondenceOnce) {
  const auto s = synth_correspondences(synth(37, 0.2, 6));
  for (std::size_t iters : {37, 38, 1000}) {
    const auto r = run_ransac(s.correspondences, config(Mode::kOse, iters));
    EXPECT_EQ(r.hypotheses_evaluated, 37u);
  }
  EXPECT_EQ(run_ransac(s.correspondences, config(Mode::kOse, 10)).hypotheses_evaluated, 10u);

  HypothesisStream stream(s.correspondences, config(Mode::kOse, 37));
  std::vector<int> seen(37, 0);
  while (auto h = stream.next()) {
    ASSERT_EQ(h->member_count, 1u);
    ++seen[h->members[0]];
  }
  EXPECT_EQ(seen, std::vector<int>(37, 1));
}

TEST(RunRansac, OseUsesRefinedRotationWhenPresentElseCoarse) {
  auto cfg = synth(1, 1.0, 7);
  const auto with = synth_correspondences(cfg);
  const auto& c = with.correspondences[0];
  HypothesisStream a(with.correspondences, config(Mode::kOse, 1));
  const auto ha = a.next();
  EXPECT_EQ(ha->transform->rotation, *c.refined_rotation);
  EXPECT_EQ(ha->transform->translation, c.q - *c.refined_rotation * c.p);

  cfg.refined_noise = -1.0;
  const auto without = synth_correspondences(cfg);
  HypothesisStream b(without.correspondences, config(Mode::kOse, 1));
  const auto hb = b.next();
  EXPECT_EQ(hb->transform->rotation, icosa::group().rotation(without.correspondences[0].coarse_rotation));
}

TEST(RunRansac, CrvTripletsShareOneCoarseRotation) {
  auto cfg = synth(400, 0.2, 8);
  cfg.coarse_accuracy = 0.7;
  const auto s = synth_correspondences(cfg);
  HypothesisStream stream(s.correspondences, config(Mode::kCrv, 500));
  EXPECT_FALSE(stream.fell_back());
  for (int k = 0; k < 500; ++k) {
    const auto h = stream.next();
    ASSERT_TRUE(h);
    const auto g = s.correspondences[h->members[0]].coarse_rotation;
    EXPECT_EQ(s.correspondences[h->members[1]].coarse_rotation, g);
    EXPECT_EQ(s.correspondences[h->members[2]].coarse_rotation, g);
    EXPECT_NE(h->members[0], h->members[1]);
    EXPECT_NE(h->members[0], h->members[2]);
    EXPECT_NE(h->members[1], h->members[2]);
  }
}

TEST(RunRansac, CrvBucketsAreSampledByTripletCount) {
  // Buckets of sizes 3, 4 and 6 hold 1, 4 and 20 triplets.
  std::vector<matchrot::Correspondence> c(13);
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i].p = Vec3(static_cast<double>(i), static_cast<double>(i * i % 7), static_cast<double>(i % 3));
    c[i].q = c[i].p;
    c[i].coarse_rotation = icosa::GroupElement(i < 3 ? 5 : i < 7 ? 9 : 30);
  }
  HypothesisStream stream(c, config(Mode::kCrv, 1));
  std::array<int, 60> hits{};
  const int n = 25000;
  for (int k = 0; k < n; ++k) ++hits[c[stream.next()->members[0]].coarse_rotation.index];
  for (auto [element, share] : {std::pair{5, 1.0 / 25}, {9, 4.0 / 25}, {30, 20.0 / 25}}) {
    const double se = std::sqrt(share * (1 - share) / n);
    EXPECT_NEAR(hits[element] / static_cast<double>(n), share, 4 * se) << element;
  }
}

TEST(RunRansac, CrvFallsBackWhenEveryBucketIsSmall) {
  std::vector<matchrot::Correspondence> c(120);
  std::mt19937_64 rng(9);
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i].p = uniform_point(rng, 1.0);
    c[i].q = c[i].p;
    c[i].coarse_rotation = icosa::GroupElement(static_cast<int>(i % 60));
  }
  const auto r = run_ransac(c, config(Mode::kCrv, 50));
  EXPECT_TRUE(r.fell_back);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.hypotheses_evaluated, 50u);
  EXPECT_EQ(r.inlier_indices.size(), 120u);

  c[0].coarse_rotation = c[1].coarse_rotation = icosa::GroupElement(1);
  EXPECT_FALSE(run_ransac(c, config(Mode::kCrv, 50)).fell_back);
}

TEST(RunRansac, DeterministicForSeedAndThreadCount) {
  auto cfg = synth(400, 0.15, 10);
  cfg.noise_sigma = 0.01;
  cfg.coarse_accuracy = 0.8;
  cfg.refined_noise = 0.05;
  const auto s = synth_correspondences(cfg);
  for (Mode mode : {Mode::kVanilla, Mode::kCrv, Mode::kOse}) {
    set_thread_count(1);
    const auto a = run_ransac(s.correspondences, config(mode, 300, 11));
    set_thread_count(4);
    const auto b = run_ransac(s.correspondences, config(mode, 300, 11));
    set_thread_count(0);
    EXPECT_EQ(a.transform.rotation, b.transform.rotation);
    EXPECT_EQ(a.transform.translation, b.transform.translation);
    EXPECT_EQ(a.inlier_indices, b.inlier_indices);
    EXPECT_EQ(a.best_hypothesis, b.best_hypothesis);
  }
}

TEST(RunRansac, WinningCountIsMonotoneInBudget) {
  auto cfg = synth(300, 0.1, 12);
  cfg.noise_sigma = 0.01;
  cfg.coarse_accuracy = 0.8;
  cfg.refined_noise = 0.05;
  const auto s = synth_correspondences(cfg);
  for (Mode mode : {Mode::kVanilla, Mode::kCrv, Mode::kOse}) {
    std::size_t prev = 0;
    for (std::size_t iters : {1, 2, 5, 10, 30, 100, 300, 1000}) {
      const auto r = run_ransac(s.correspondences, config(mode, iters, 13));
      EXPECT_GE(r.best_hypothesis_inliers, prev) << to_string(mode) << " " << iters;
      prev = r.best_hypothesis_inliers;
    }
  }
}

TEST(RunRansac, ReportedInliersAreRecountable) {
  auto cfg = synth(300, 0.2, 14);
  cfg.noise_sigma = 0.01;
  const auto s = synth_correspondences(cfg);
  for (Mode mode : {Mode::kVanilla, Mode::kCrv, Mode::kOse}) {
    for (bool refit : {false, true}) {
      RansacConfig rc = config(mode, 200, 15);
      rc.refit = refit;
      const auto r = run_ransac(s.correspondences, rc);
      EXPECT_EQ(r.inlier_indices, count_inliers(r.transform, s.correspondences, rc.inlier_threshold));
      EXPECT_EQ(r.refitted, refit);
      EXPECT_TRUE(is_rotation(r.transform.rotation, 1e-9));
    }
  }
}

TEST(RunRansac, TiesGoToTheEarliestHypothesis) {
  // Every OSE hypothesis explains exactly its own correspondence.
  std::vector<matchrot::Correspondence> c(20);
  std::mt19937_64 rng(16);
  for (auto& ci : c) {
    ci.p = Vec3::Zero();
    ci.q = uniform_point(rng, 10.0);
  }
  RansacConfig rc = config(Mode::kOse, 20);
  rc.refit = false;
  const auto r = run_ransac(c, rc);
  EXPECT_EQ(r.best_hypothesis, 0u);
  EXPECT_EQ(r.best_hypothesis_inliers, 1u);
}

TEST(RunRansac, DistanceCheckRejectsIncompatibleTriplets) {
  std::vector<matchrot::Correspondence> c(3);
  c[0].p = Vec3(0, 0, 0), c[1].p = Vec3(1, 0, 0), c[2].p = Vec3(0, 1, 0);
  c[0].q = Vec3(0, 0, 0), c[1].q = Vec3(2, 0, 0), c[2].q = Vec3(0, 1, 0);
  RansacConfig rc = config(Mode::kVanilla, 1);
  rc.distance_check = true;
  EXPECT_FALSE(HypothesisStream(c, rc).next()->transform);
  rc.distance_check = false;
  EXPECT_TRUE(HypothesisStream(c, rc).next()->transform);
  const auto r = run_ransac(c, config(Mode::kVanilla, 1));
  EXPECT_EQ(r.hypotheses_evaluated, 1u);
}

TEST(RunRansac, DegenerateSamplesConsumeBudgetWithoutWinning) {
  std::vector<matchrot::Correspondence> c(3);
  for (int i = 0; i < 3; ++i) c[i].p = c[i].q = Vec3(i, 0, 0);
  const auto r = run_ransac(c, config(Mode::kVanilla, 4));
  EXPECT_EQ(r.hypotheses_evaluated, 4u);
  EXPECT_FALSE(r.best_hypothesis);
  EXPECT_EQ(r.inlier_indices, count_inliers(r.transform, c, 0.05));
}

TEST(RunRansac, RejectsBadInput) {
  const auto s = synth_correspondences(synth(2, 1.0, 17));
  EXPECT_THROW(run_ransac(s.correspondences, config(Mode::kVanilla, 10)), Error);
  EXPECT_THROW(run_ransac(s.correspondences, config(Mode::kCrv, 10)), Error);
  EXPECT_NO_THROW(run_ransac(std::span(s.correspondences).first(1), config(Mode::kOse, 10)));
  EXPECT_THROW(run_ransac({}, config(Mode::kOse, 10)), Error);
  EXPECT_THROW(run_ransac(s.correspondences, config(Mode::kOse, 0)), Error);
  RansacConfig rc = config(Mode::kOse, 10);
  rc.inlier_threshold = 0.0;
  EXPECT_THROW(run_ransac(s.correspondences, rc), Error);
  EXPECT_THROW(parse_mode("lo-ransac"), Error);
  EXPECT_EQ(parse_mode("crv"), Mode::kCrv);
}

TEST(RunRansac, VanillaAndOseFirstHypothesisSuccessRates) {
  const double alpha = 0.3;
  const int trials = 2000;
  int vanilla = 0, ose = 0;
  for (int t = 0; t < trials; ++t) {
    const auto s = synth_correspondences(synth(200, alpha, 1000 + static_cast<std::uint64_t>(t)));
    auto first_correct = [&](Mode mode) {
      const auto h = HypothesisStream(s.correspondences, config(mode, 1, static_cast<std::uint64_t>(t))).next();
      return h->transform && rotation_distance(h->transform->rotation, s.truth.rotation) < 1e-6;
    };
    vanilla += first_correct(Mode::kVanilla);
    ose += first_correct(Mode::kOse);
  }
  const double p3 = 60.0 * 59 * 58 / (200.0 * 199 * 198);
  EXPECT_NEAR(ose / double(trials), alpha, 3 * std::sqrt(alpha * (1 - alpha) / trials));
  EXPECT_NEAR(vanilla / double(trials), p3, 3 * std::sqrt(p3 * (1 - p3) / trials));
}

}  // namespace
