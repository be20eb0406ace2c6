#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "icoreg/backbone.hpp"
#include "icoreg/icosa.hpp"

namespace icoreg::groupnet {

using icosa::GroupElement;
using icosa::GroupFeature;
using icosa::IcosahedralGroup;
using Matrix = GroupFeature::Matrix;

/// One localized group convolution:
///   out(g)_j = sum_i w_{j,i} · in(h_i g) + b_j
/// `weights` is out × (support · in); column block i holds w_{·,i}.
struct GroupConvLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
  int in_dim = 0;
  int support = icosa::kNeighborhoodSize;

  int out_dim() const { return static_cast<int>(bias.size()); }
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out × in
  Eigen::VectorXd bias;

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
};

/// Embedder (group convolutions + ReLU) and the optional rotation residual
/// regressor (group convolutions + ReLU, average pool, MLP to a quaternion).
/// All values are float32-representable so the weights file round-trips
/// exactly.
struct NetworkWeights {
  std::vector<GroupConvLayer> embedder;
  std::vector<GroupConvLayer> regressor_convs;
  std::vector<DenseLayer> regressor_mlp;

  bool has_regressor() const { return !regressor_convs.empty(); }
  int input_dim() const { return embedder.empty() ? 0 : embedder.front().in_dim; }
  int descriptor_dim() const { return embedder.empty() ? input_dim() : embedder.back().out_dim(); }
  /// Throws Error(kDimensionMismatch) if layer shapes do not chain.
  void validate() const;
  /// Same shapes, all zeros (used for gradients and optimizer moments).
  NetworkWeights zeros_like() const;
};

struct NetworkShape {
  int input_dim = 32;
  std::vector<int> embedder_widths = {32, 32, 32, 32};
  std::vector<int> regressor_widths = {32, 32, 32};
  std::vector<int> mlp_hidden = {32, 32};  // followed by the 4-wide output layer
};

/// Seeded uniform init in ±sqrt(6 / (fan_in + fan_out)), where a group
/// convolution's fan_in is 13·n_in. Biases start at zero except the final
/// regressor bias, which starts at the identity quaternion.
NetworkWeights init_weights(const NetworkShape& shape, std::uint64_t seed, bool with_regressor = true);

/// Rounds every parameter to the nearest float32.
void snap_to_float(NetworkWeights& w);

/// Row g is the backbone feature of the patch rotated by R_g (60 backbone
/// evaluations). Layer tag 0.
GroupFeature extract_group_feature(const backbone::Patch& patch, const backbone::Backbone& phi,
                                   const IcosahedralGroup& group = icosa::group());

/// Lifted input of a group convolution: 60 × (|support|·n) with column block
/// i of row g holding x(support[i]·g).
Matrix gather_support(const Matrix& x, std::span<const GroupElement> support,
                      const IcosahedralGroup& group = icosa::group());
/// Adjoint of gather_support: accumulates dcat back into dx.
void scatter_support_add(const Matrix& dcat, std::span<const GroupElement> support,
                         const IcosahedralGroup& group, Matrix& dx);

/// Column means in a row-order-independent summation order.
Eigen::VectorXd row_mean(const Matrix& m);

GroupFeature group_conv(const GroupFeature& f, const GroupConvLayer& layer,
                        std::span<const GroupElement> support,
                        const IcosahedralGroup& group = icosa::group());
/// Convolution over the neighborhood set H.
GroupFeature group_conv(const GroupFeature& f, const GroupConvLayer& layer,
                        const IcosahedralGroup& group = icosa::group());

/// The first `layers` embedder stages (convolution then ReLU), without the
/// final normalization. layers = 0 returns f0.
GroupFeature embed_prefix(const GroupFeature& f0, const NetworkWeights& w, int layers,
                          const IcosahedralGroup& group = icosa::group());

/// All embedder stages, then the whole 60×n matrix scaled to unit Frobenius
/// norm. An all-zero result is returned unscaled.
GroupFeature embed(const GroupFeature& f0, const NetworkWeights& w,
                   const IcosahedralGroup& group = icosa::group());

/// Unit-norm rotation-invariant descriptor.
struct Descriptor {
  Eigen::VectorXd values;
};

/// Column mean over the 60 rows, L2-normalized. Throws
/// Error(kDegenerateDescriptor) when the mean is zero.
Descriptor pool_descriptor(const GroupFeature& f);

/// Channel-wise concatenation [f0_q; fl_q; P_c f0_p; P_c fl_p] fed to the
/// regressor.
GroupFeature regressor_input(const GroupFeature& f0_p, const GroupFeature& fl_p,
                             const GroupFeature& f0_q, const GroupFeature& fl_q,
                             GroupElement coarse, const IcosahedralGroup& group = icosa::group());

/// Raw (unnormalized) residual quaternion (w, x, y, z). Requires regressor
/// weights.
Quat4 regress_residual(const GroupFeature& input, const NetworkWeights& w,
                       const IcosahedralGroup& group = icosa::group());

/// Pooled regressor feature fed to the MLP (exposed for architecture tests).
Eigen::VectorXd regressor_pooled(const GroupFeature& input, const NetworkWeights& w,
                                 const IcosahedralGroup& group = icosa::group());

/// Versioned little-endian binary: "ICOW", version, per-layer shape header,
/// then row-major float32 weights and biases in layer order.
void save_weights(const NetworkWeights& w, const std::filesystem::path& path);
NetworkWeights load_weights(const std::filesystem::path& path);

}  // namespace icoreg::groupnet
