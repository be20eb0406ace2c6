#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "icoreg/groupnet.hpp"

namespace icoreg::groupnet {

// ---------------------------------------------------------------------------
// Losses. Each returns the value and the gradient with respect to its inputs.

inline constexpr double kInvariantLossWeight = 5.0;

/// Batch-hard descriptor loss
///   (e^a − e^{b*}) / (e^a + Σ_n e^{b_n}),  a = ‖d − d⁺‖, b_n = ‖d − d⁻_n‖,
/// with b* the smallest negative distance (ties to the lowest index).
/// Throws Error(kInvalidArgument) on an empty negative set.
struct InvariantLoss {
  double value = 0.0;
  Eigen::VectorXd grad_anchor, grad_positive;
  std::vector<Eigen::VectorXd> grad_negatives;
  std::size_t hardest = 0;
};
InvariantLoss invariant_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                             std::span<const Eigen::VectorXd> negatives);

/// Cross-entropy over the 60 permutation logits z_g = ⟨f, P_g f⁺⟩ with label
/// g⁺, where f is the query (rotated) feature and f⁺ the reference.
struct EquivarianceLoss {
  double value = 0.0;
  Matrix grad_query, grad_reference;
  Eigen::VectorXd logits;
};
EquivarianceLoss equivariance_loss(const Matrix& query, const Matrix& reference, GroupElement label,
                                   const IcosahedralGroup& group = icosa::group());

/// ‖q̂ − s·q(R·R_{g⁺}ᵀ)‖ where q̂ is the normalized prediction and s = ±1
/// picks the nearer hemisphere. A non-unit prediction is renormalized (with a
/// warning when `warn_nonunit`); a zero prediction throws
/// Error(kInvalidArgument). The gradient is with respect to the raw output.
struct ResidualLoss {
  double value = 0.0;
  Quat4 grad_raw = Quat4::Zero();
  Quat4 target = Quat4::Zero();
};
ResidualLoss residual_loss(const Quat4& raw_prediction, const Mat3& rotation, GroupElement label,
                           const IcosahedralGroup& group = icosa::group(), bool warn_nonunit = true);

/// Mean over the batch of λ·ℓ1 + ℓ2. Sample b uses the other samples'
/// positive descriptors as negatives; ℓ2 takes the positive feature as the
/// query and the anchor feature as the reference.
struct DescriptorBatchLoss {
  double value = 0.0, invariant = 0.0, equivariance = 0.0;
  std::vector<Eigen::VectorXd> grad_d_anchor, grad_d_positive;
  std::vector<Matrix> grad_f_anchor, grad_f_positive;
};
DescriptorBatchLoss descriptor_batch_loss(std::span<const Eigen::VectorXd> d_anchor,
                                          std::span<const Eigen::VectorXd> d_positive,
                                          std::span<const Matrix> f_anchor, std::span<const Matrix> f_positive,
                                          std::span<const GroupElement> labels,
                                          double lambda = kInvariantLossWeight,
                                          const IcosahedralGroup& group = icosa::group());

// ---------------------------------------------------------------------------
// Forward passes that keep activations, and their adjoints.

struct EmbedderTape {
  std::vector<Matrix> lifted;  // gathered input of each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  Matrix raw;                  // last ReLU output
  double raw_norm = 0.0;
  Matrix fl;                   // raw / raw_norm
  Eigen::VectorXd mean;
  double mean_norm = 0.0;
  Eigen::VectorXd descriptor;
};
/// Throws Error(kDegenerateDescriptor) when the output or its pooled mean is
/// zero.
EmbedderTape embed_forward(const GroupFeature& f0, const NetworkWeights& w,
                           const IcosahedralGroup& group = icosa::group());
/// Adds dL/dW for the embedder into `grad` given dL/df_l and dL/dd.
void embed_backward(const EmbedderTape& tape, const NetworkWeights& w, const Matrix& grad_fl,
                    const Eigen::VectorXd& grad_descriptor, NetworkWeights& grad,
                    const IcosahedralGroup& group = icosa::group());

struct RegressorTape {
  std::vector<Matrix> lifted, pre;
  Eigen::VectorXd pooled;
  std::vector<Eigen::VectorXd> mlp_in, mlp_pre;
  Quat4 output = Quat4::Zero();
};
RegressorTape regressor_forward(const GroupFeature& input, const NetworkWeights& w,
                                const IcosahedralGroup& group = icosa::group());
/// Adds dL/dW for the regressor into `grad` given dL/d(raw output).
void regressor_backward(const RegressorTape& tape, const NetworkWeights& w, const Quat4& grad_output,
                        NetworkWeights& grad, const IcosahedralGroup& group = icosa::group());

// ---------------------------------------------------------------------------
// Trainer

/// A reference patch and a rotated copy (positive = R · anchor).
struct TrainingPair {
  GroupFeature f0_anchor, f0_positive;
  Mat3 rotation = Mat3::Identity();
  GroupElement label;  // quantize(rotation)
};

TrainingPair make_training_pair(const backbone::Patch& anchor, const backbone::Patch& positive,
                                const Mat3& rotation, const backbone::Backbone& phi,
                                const IcosahedralGroup& group = icosa::group());

struct TrainOptions {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 1e-4;
  double decay_factor = 0.5;
  double decay_epochs = 1.8;  // lr halves every this many epochs (continuous)
  double lambda = kInvariantLossWeight;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::uint64_t seed = 0;
};

/// Defaults for the regressor stage: lr 1e-3, halving every 3 epochs.
TrainOptions regressor_train_options();

struct TrainReport {
  /// Full-set loss before training, then after every epoch.
  std::vector<double> epoch_loss;
};

/// Mean descriptor loss over fixed consecutive batches (no shuffling).
/// Batches with a single sample are folded into the previous batch.
double evaluate_descriptor_loss(std::span<const TrainingPair> data, const NetworkWeights& w,
                                const TrainOptions& options, const IcosahedralGroup& group = icosa::group());

/// Adam on the embedder parameters only. Deterministic per seed. Throws
/// Error(kDivergence) if the loss becomes non-finite. Result is snapped to
/// float32.
NetworkWeights train_embedder(std::span<const TrainingPair> data, NetworkWeights init,
                              const TrainOptions& options, TrainReport* report = nullptr,
                              const IcosahedralGroup& group = icosa::group());
NetworkWeights train_embedder(std::span<const TrainingPair> data, const NetworkShape& shape,
                              const TrainOptions& options, TrainReport* report = nullptr);

/// Mean residual loss with the regressor fed ground-truth coarse rotations.
double evaluate_regressor_loss(std::span<const TrainingPair> data, const NetworkWeights& w,
                               const IcosahedralGroup& group = icosa::group());

/// Adam on the regressor parameters with the embedder frozen.
NetworkWeights train_regressor(std::span<const TrainingPair> data, NetworkWeights init,
                               const TrainOptions& options, TrainReport* report = nullptr,
                               const IcosahedralGroup& group = icosa::group());

}  // namespace icoreg::groupnet
