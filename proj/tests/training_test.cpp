#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "icoreg/error.hpp"
#include "icoreg/training.hpp"
#include "support.hpp"

namespace {

using namespace icoreg;
using namespace icoreg::groupnet;
using icoreg::testing::random_matrix;
using icoreg::testing::random_patch;
using icoreg::testing::relative_error;

constexpr double kStep = 1e-6;
constexpr double kGradTolerance = 1e-4;

const IcosahedralGroup& G() { return icosa::group(); }

Eigen::VectorXd unit(std::mt19937_64& rng, int n) { return Eigen::VectorXd(random_matrix(n, 1, rng)).normalized(); }

// Central difference of f along direction v at h = kStep.
double directional(const std::function<double(double)>& f) { return (f(kStep) - f(-kStep)) / (2.0 * kStep); }

std::vector<TrainingPair> toy_pairs(std::size_t n, std::uint64_t seed, std::size_t points = 120) {
  const backbone::HistogramBackbone phi;
  std::mt19937_64 rng(seed);
  std::vector<TrainingPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const backbone::Patch p = random_patch(seed * 1000 + i, points);
    const Mat3 r = random_rotation(rng);
    out.push_back(make_training_pair(p, backbone::rotate_patch(p, r), r, phi));
  }
  return out;
}

TEST(InvariantLoss, HandComputed) {
  const Eigen::VectorXd d = Eigen::Vector2d(1, 0), pos = Eigen::Vector2d(0, 1);
  const std::vector<Eigen::VectorXd> neg = {Eigen::Vector2d(-1, 0), Eigen::Vector2d(0, -1)};
  const InvariantLoss l = invariant_loss(d, pos, neg);
  const double a = std::sqrt(2.0), b0 = 2.0, b1 = std::sqrt(2.0);
  EXPECT_EQ(l.hardest, 1u);
  EXPECT_NEAR(l.value, (std::exp(a) - std::exp(b1)) / (std::exp(a) + std::exp(b0) + std::exp(b1)), 1e-15);
}

TEST(InvariantLoss, EmptyNegativesThrow) {
  EXPECT_THROW(invariant_loss(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1), {}), Error);
}

TEST(InvariantLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int point = 0; point < 100; ++point) {
    const int n = 8;
    Eigen::VectorXd d = unit(rng, n), pos = unit(rng, n);
    std::vector<Eigen::VectorXd> neg;
    for (int k = 0; k < 5; ++k) neg.push_back(unit(rng, n));
    const InvariantLoss l = invariant_loss(d, pos, neg);
    const Eigen::VectorXd vd = unit(rng, n), vp = unit(rng, n), vn = unit(rng, n);
    const double analytic = l.grad_anchor.dot(vd) + l.grad_positive.dot(vp) + l.grad_negatives[2].dot(vn);
    const double numeric = directional([&](double h) {
      auto nn = neg;
      nn[2] += h * vn;
      return invariant_loss(d + h * vd, pos + h * vp, nn).value;
    });
    EXPECT_LE(relative_error(analytic, numeric), kGradTolerance) << "point " << point;
  }
}

TEST(EquivarianceLoss, UniformLogitsGiveLog60) {
  // A query orthogonal to every permutation of the reference.
  Matrix ref = Matrix::Zero(60, 2), query = Matrix::Zero(60, 2);
  ref.col(0).setOnes();
  query.col(1).setOnes();
  const EquivarianceLoss l = equivariance_loss(query, ref, GroupElement(7));
  EXPECT_NEAR(l.value, std::log(60.0), 1e-12);
}

TEST(EquivarianceLoss, CorrectClassIsTheMinimum) {
  std::mt19937_64 rng(2);
  const Matrix ref = 10.0 * random_matrix(60, 6, rng);
  const GroupElement label(33);
  const Matrix query = icosa::permute(GroupFeature(ref), label).values;
  const EquivarianceLoss l = equivariance_loss(query, ref, label);
  EXPECT_GE(l.value, 0.0);
  EXPECT_LT(l.value, 1e-6);
  for (int g = 0; g < 60; ++g)
    if (g != label.index) EXPECT_GT(equivariance_loss(query, ref, GroupElement(g)).value, l.value);
}

TEST(EquivarianceLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int point = 0; point < 100; ++point) {
    const Matrix q = 0.2 * random_matrix(60, 4, rng), r = 0.2 * random_matrix(60, 4, rng);
    const GroupElement label(static_cast<int>(rng() % 60));
    const EquivarianceLoss l = equivariance_loss(q, r, label);
    const Matrix vq = random_matrix(60, 4, rng), vr = random_matrix(60, 4, rng);
    const double analytic = (l.grad_query.array() * vq.array()).sum() + (l.grad_reference.array() * vr.array()).sum();
    const double numeric =
        directional([&](double h) { return equivariance_loss(q + h * vq, r + h * vr, label).value; });
    EXPECT_LE(relative_error(analytic, numeric), kGradTolerance) << "point " << point;
  }
}

TEST(ResidualLoss, PerfectPredictionIsZero) {
  std::mt19937_64 rng(4);
  const Mat3 r = random_rotation(rng);
  const GroupElement label = G().quantize(r).first;
  const Quat4 q = to_quaternion(r * G().rotation(label).transpose());
  EXPECT_NEAR(residual_loss(q, r, label).value, 0.0, 1e-12);
  EXPECT_NEAR(residual_loss(-q, r, label).value, 0.0, 1e-12);
}

TEST(ResidualLoss, GroupRotationHasIdentityTarget) {
  const GroupElement g(41);
  const ResidualLoss l = residual_loss(Quat4(1, 0, 0, 0), G().rotation(g), g);
  EXPECT_LE((l.target - Quat4(1, 0, 0, 0)).norm(), 1e-12);
  EXPECT_NEAR(l.value, 0.0, 1e-12);
}

TEST(ResidualLoss, ZeroPredictionThrows) {
  EXPECT_THROW(residual_loss(Quat4::Zero(), Mat3::Identity(), GroupElement()), Error);
}

TEST(ResidualLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int point = 0; point < 100; ++point) {
    const Mat3 r = random_rotation(rng);
    const GroupElement label = G().quantize(r).first;
    const Quat4 raw = Quat4(random_matrix(4, 1, rng)) * 1.7;
    const ResidualLoss l = residual_loss(raw, r, label, G(), false);
    const Quat4 v = Quat4(random_matrix(4, 1, rng));
    const double numeric = directional([&](double h) { return residual_loss(raw + h * v, r, label, G(), false).value; });
    EXPECT_LE(relative_error(l.grad_raw.dot(v), numeric), kGradTolerance) << "point " << point;
  }
}

// Embedder parameters flattened in layer order.
std::vector<double*> embedder_params(NetworkWeights& w) {
  std::vector<double*> out;
  for (auto& l : w.embedder) {
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) out.push_back(l.weights.data() + i);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data() + i);
  }
  return out;
}

std::vector<double*> regressor_params(NetworkWeights& w) {
  std::vector<double*> out;
  for (auto& l : w.regressor_convs) {
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) out.push_back(l.weights.data() + i);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data() + i);
  }
  for (auto& l : w.regressor_mlp) {
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) out.push_back(l.weights.data() + i);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data() + i);
  }
  return out;
}

// ReLU on/off pattern of every unit. Central differences are only valid when
// the stencil does not cross a kink, i.e. the pattern is the same at both ends.
std::vector<bool> activation_pattern(const std::vector<Matrix>& pre) {
  std::vector<bool> out;
  for (const Matrix& m : pre)
    for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i] > 0.0);
  return out;
}

std::vector<bool> embedder_pattern(const std::vector<TrainingPair>& pairs, const NetworkWeights& w) {
  std::vector<bool> out;
  for (const auto& p : pairs)
    for (const GroupFeature* f : {&p.f0_anchor, &p.f0_positive}) {
      const auto a = activation_pattern(embed_forward(*f, w).pre);
      out.insert(out.end(), a.begin(), a.end());
    }
  return out;
}

std::vector<bool> regressor_pattern(const GroupFeature& x, const NetworkWeights& w) {
  const RegressorTape t = regressor_forward(x, w);
  std::vector<bool> out = activation_pattern(t.pre);
  for (std::size_t k = 0; k + 1 < t.mlp_pre.size(); ++k)
    for (Eigen::Index i = 0; i < t.mlp_pre[k].size(); ++i) out.push_back(t.mlp_pre[k][i] > 0.0);
  return out;
}

NetworkWeights shifted(const NetworkWeights& w, const std::vector<double>& dir, double h, bool embedder) {
  NetworkWeights out = w;
  const auto sp = embedder ? embedder_params(out) : regressor_params(out);
  for (std::size_t i = 0; i < sp.size(); ++i) *sp[i] += h * dir[i];
  return out;
}

double batch_loss(const std::vector<TrainingPair>& pairs, const NetworkWeights& w) {
  std::vector<Eigen::VectorXd> da, dp;
  std::vector<Matrix> fa, fp;
  std::vector<GroupElement> labels;
  for (const auto& p : pairs) {
    const EmbedderTape a = embed_forward(p.f0_anchor, w), b = embed_forward(p.f0_positive, w);
    da.push_back(a.descriptor);
    dp.push_back(b.descriptor);
    fa.push_back(a.fl);
    fp.push_back(b.fl);
    labels.push_back(p.label);
  }
  return descriptor_batch_loss(da, dp, fa, fp, labels).value;
}

TEST(DescriptorLoss, NetworkGradientMatchesFiniteDifferences) {
  const NetworkShape shape{32, {6, 6}, {}, {}};
  const auto pairs = toy_pairs(3, 6, 60);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  int checked = 0, skipped = 0;
  for (std::uint64_t seed = 100; checked < 100 && skipped < 50; ++seed) {
    NetworkWeights w = init_weights(shape, seed, false);
    for (auto& l : w.embedder) l.bias = 0.05 * random_matrix(l.out_dim(), 1, rng);

    std::vector<Eigen::VectorXd> da, dp;
    std::vector<Matrix> fa, fp;
    std::vector<GroupElement> labels;
    std::vector<EmbedderTape> tapes;
    for (const auto& p : pairs) {
      tapes.push_back(embed_forward(p.f0_anchor, w));
      tapes.push_back(embed_forward(p.f0_positive, w));
      da.push_back(tapes[tapes.size() - 2].descriptor);
      dp.push_back(tapes.back().descriptor);
      fa.push_back(tapes[tapes.size() - 2].fl);
      fp.push_back(tapes.back().fl);
      labels.push_back(p.label);
    }
    const DescriptorBatchLoss loss = descriptor_batch_loss(da, dp, fa, fp, labels);
    NetworkWeights grad = w.zeros_like();
    for (std::size_t b = 0; b < pairs.size(); ++b) {
      embed_backward(tapes[2 * b], w, loss.grad_f_anchor[b], loss.grad_d_anchor[b], grad);
      embed_backward(tapes[2 * b + 1], w, loss.grad_f_positive[b], loss.grad_d_positive[b], grad);
    }

    const auto params = embedder_params(w);
    const auto grads = embedder_params(grad);
    std::vector<double> dir(params.size());
    double analytic = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      dir[i] = g(rng);
      analytic += *grads[i] * dir[i];
    }
    const auto pattern = embedder_pattern(pairs, w);
    if (embedder_pattern(pairs, shifted(w, dir, kStep, true)) != pattern ||
        embedder_pattern(pairs, shifted(w, dir, -kStep, true)) != pattern) {
      ++skipped;
      continue;
    }
    const double numeric = directional([&](double h) { return batch_loss(pairs, shifted(w, dir, h, true)); });
    EXPECT_LE(relative_error(analytic, numeric), kGradTolerance) << "seed " << seed;
    ++checked;
  }
  EXPECT_EQ(checked, 100);
  RecordProperty("skipped", skipped);
}

TEST(ResidualLoss, RegressorGradientMatchesFiniteDifferences) {
  const NetworkShape shape{32, {4}, {5, 5, 5}, {6, 6}};
  const auto pairs = toy_pairs(2, 8, 60);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  int checked = 0, skipped = 0;
  for (std::uint64_t seed = 200; checked < 100 && skipped < 50; ++seed) {
    NetworkWeights w = init_weights(shape, seed, true);
    for (auto& l : w.regressor_convs) l.bias = 0.05 * random_matrix(l.out_dim(), 1, rng);
    const TrainingPair& p = pairs[seed % pairs.size()];
    const GroupFeature x =
        regressor_input(p.f0_anchor, embed(p.f0_anchor, w), p.f0_positive, embed(p.f0_positive, w), p.label);
    const RegressorTape tape = regressor_forward(x, w);
    const ResidualLoss l = residual_loss(tape.output, p.rotation, p.label, G(), false);
    NetworkWeights grad = w.zeros_like();
    regressor_backward(tape, w, l.grad_raw, grad);

    const auto params = regressor_params(w);
    const auto grads = regressor_params(grad);
    std::vector<double> dir(params.size());
    double analytic = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      dir[i] = g(rng);
      analytic += *grads[i] * dir[i];
    }
    const auto pattern = regressor_pattern(x, w);
    if (regressor_pattern(x, shifted(w, dir, kStep, false)) != pattern ||
        regressor_pattern(x, shifted(w, dir, -kStep, false)) != pattern) {
      ++skipped;
      continue;
    }
    const double numeric = directional([&](double h) {
      return residual_loss(regress_residual(x, shifted(w, dir, h, false)), p.rotation, p.label, G(), false).value;
    });
    EXPECT_LE(relative_error(analytic, numeric), kGradTolerance) << "seed " << seed;
    ++checked;
  }
  EXPECT_EQ(checked, 100);
  RecordProperty("skipped", skipped);
}

TEST(Tapes, MatchInferencePath) {
  const NetworkWeights w = init_weights(NetworkShape{}, 10, true);
  const auto pairs = toy_pairs(1, 11);
  const EmbedderTape t = embed_forward(pairs[0].f0_anchor, w);
  const GroupFeature fl = embed(pairs[0].f0_anchor, w);
  EXPECT_LE((t.fl - fl.values).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((t.descriptor - pool_descriptor(fl).values).norm(), 1e-15);
  const GroupFeature x = regressor_input(pairs[0].f0_anchor, fl, pairs[0].f0_positive,
                                         embed(pairs[0].f0_positive, w), pairs[0].label);
  EXPECT_LE((regressor_forward(x, w).output - regress_residual(x, w)).norm(), 1e-15);
}

TEST(Trainer, OneLayerLossDecreasesEveryEpoch) {
  const auto pairs = toy_pairs(50, 12);
  const NetworkShape shape{32, {32}, {}, {}};
  TrainOptions o;
  o.seed = 13;
  TrainReport report;
  train_embedder(pairs, shape, o, &report);
  ASSERT_EQ(report.epoch_loss.size(), 11u);
  for (std::size_t e = 1; e < report.epoch_loss.size(); ++e)
    EXPECT_LT(report.epoch_loss[e], report.epoch_loss[e - 1]) << "epoch " << e;
}

TEST(Trainer, ZeroLearningRateLeavesWeights) {
  const auto pairs = toy_pairs(10, 14);
  const NetworkWeights init = init_weights(NetworkShape{}, 15, false);
  TrainOptions o;
  o.learning_rate = 0.0;
  o.epochs = 2;
  const NetworkWeights out = train_embedder(pairs, init, o);
  for (std::size_t k = 0; k < init.embedder.size(); ++k) {
    EXPECT_EQ(out.embedder[k].weights, init.embedder[k].weights);
    EXPECT_EQ(out.embedder[k].bias, init.embedder[k].bias);
  }
}

TEST(Trainer, DeterministicPerSeed) {
  const auto pairs = toy_pairs(12, 16);
  TrainOptions o;
  o.epochs = 2;
  o.batch_size = 5;
  o.seed = 17;
  const NetworkShape shape{32, {8, 8}, {}, {}};
  const NetworkWeights a = train_embedder(pairs, shape, o), b = train_embedder(pairs, shape, o);
  for (std::size_t k = 0; k < a.embedder.size(); ++k) EXPECT_EQ(a.embedder[k].weights, b.embedder[k].weights);
}

TEST(Trainer, DivergenceIsReported) {
  const auto pairs = toy_pairs(6, 18);
  TrainOptions o;
  o.learning_rate = 1e300;
  o.epochs = 3;
  o.batch_size = 3;
  try {
    train_embedder(pairs, NetworkShape{32, {8}, {}, {}}, o);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_TRUE(e.kind() == ErrorKind::kDivergence || e.kind() == ErrorKind::kDegenerateDescriptor) << e.what();
  }
}

TEST(Trainer, RegressorLossDecreases) {
  const auto pairs = toy_pairs(40, 19);
  NetworkWeights w = init_weights(NetworkShape{}, 20, true);
  TrainOptions o = regressor_train_options();
  o.epochs = 5;
  o.seed = 21;
  TrainReport report;
  const NetworkWeights trained = train_regressor(pairs, w, o, &report);
  EXPECT_LT(report.epoch_loss.back(), report.epoch_loss.front());
  EXPECT_NEAR(evaluate_regressor_loss(pairs, trained), report.epoch_loss.back(), 1e-12);
  EXPECT_EQ(trained.embedder[0].weights, w.embedder[0].weights);
}

TEST(Trainer, RejectsBadInput) {
  const auto pairs = toy_pairs(3, 22);
  TrainOptions o;
  o.batch_size = 1;
  EXPECT_THROW(train_embedder(pairs, NetworkShape{}, o), Error);
  EXPECT_THROW(train_embedder(std::span<const TrainingPair>(pairs.data(), 1), NetworkShape{}, TrainOptions{}), Error);
  EXPECT_THROW(train_regressor(pairs, init_weights(NetworkShape{}, 1, false), regressor_train_options()), Error);
}

}  // namespace
