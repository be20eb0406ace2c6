#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "icoreg/error.hpp"
#include "icoreg/parallel.hpp"
#include "icoreg/training.hpp"

namespace icoreg::groupnet {

namespace {

Matrix relu_mask(const Matrix& grad, const Matrix& pre) {
  return (pre.array() > 0.0).select(grad, 0.0);
}

// Backprop through convolution + ReLU layers, last to first. grad_out is
// dL/d(ReLU output of the last layer). The input gradient of layer 0 is not
// needed and is skipped.
void conv_stack_backward(const std::vector<GroupConvLayer>& layers, const std::vector<Matrix>& lifted,
                         const std::vector<Matrix>& pre, Matrix grad_out, std::vector<GroupConvLayer>& grad,
                         const IcosahedralGroup& group) {
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Matrix dz = relu_mask(grad_out, pre[k]);
    grad[k].weights.noalias() += dz.transpose() * lifted[k];
    grad[k].bias += dz.colwise().sum().transpose();
    if (k == 0) break;
    const Matrix dlift = dz * layers[k].weights;
    grad_out = Matrix::Zero(icosa::kGroupOrder, layers[k].in_dim);
    scatter_support_add(dlift, group.neighborhood(), group, grad_out);
  }
}

Matrix conv_stack_forward(const std::vector<GroupConvLayer>& layers, Matrix x, std::vector<Matrix>& lifted,
                          std::vector<Matrix>& pre, const IcosahedralGroup& group) {
  lifted.clear();
  pre.clear();
  for (const GroupConvLayer& l : layers) {
    if (x.cols() != l.in_dim) throw Error(ErrorKind::kDimensionMismatch, "group feature width does not match layer");
    lifted.push_back(gather_support(x, group.neighborhood(), group));
    Matrix z = lifted.back() * l.weights.transpose();
    z.rowwise() += l.bias.transpose();
    x = z.cwiseMax(0.0);
    pre.push_back(std::move(z));
  }
  return x;
}

enum class Part { kEmbedder, kRegressor };

std::vector<std::span<double>> parameters(NetworkWeights& w, Part part) {
  std::vector<std::span<double>> out;
  auto add = [&](auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
  if (part == Part::kEmbedder) {
    for (auto& l : w.embedder) {
      add(l.weights);
      add(l.bias);
    }
  } else {
    for (auto& l : w.regressor_convs) {
      add(l.weights);
      add(l.bias);
    }
    for (auto& l : w.regressor_mlp) {
      add(l.weights);
      add(l.bias);
    }
  }
  return out;
}

void add_into(NetworkWeights& acc, NetworkWeights& g, Part part) {
  auto a = parameters(acc, part);
  auto b = parameters(g, part);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
}

class Adam {
 public:
  Adam(const NetworkWeights& w, Part part, const TrainOptions& o)
      : m_(w.zeros_like()), v_(w.zeros_like()), part_(part), o_(o) {}

  void step(NetworkWeights& w, NetworkWeights& grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(o_.beta1, t_);
    const double c2 = 1.0 - std::pow(o_.beta2, t_);
    auto p = parameters(w, part_), g = parameters(grad, part_), m = parameters(m_, part_), v = parameters(v_, part_);
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < p[i].size(); ++j) {
        m[i][j] = o_.beta1 * m[i][j] + (1.0 - o_.beta1) * g[i][j];
        v[i][j] = o_.beta2 * v[i][j] + (1.0 - o_.beta2) * g[i][j] * g[i][j];
        p[i][j] -= lr * (m[i][j] / c1) / (std::sqrt(v[i][j] / c2) + o_.epsilon);
      }
  }

 private:
  NetworkWeights m_, v_;
  Part part_;
  TrainOptions o_;
  int t_ = 0;
};

// Consecutive batches over `order`; a trailing single sample joins the
// previous batch.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int batch_size) {
  std::vector<std::vector<std::size_t>> out;
  const std::size_t bs = static_cast<std::size_t>(std::max(batch_size, 2));
  for (std::size_t i = 0; i < order.size(); i += bs)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + bs)));
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

double learning_rate(const TrainOptions& o, std::size_t step, std::size_t steps_per_epoch) {
  const double epoch = static_cast<double>(step) / static_cast<double>(steps_per_epoch);
  return o.learning_rate * std::pow(o.decay_factor, epoch / o.decay_epochs);
}

void check_options(const TrainOptions& o) {
  if (o.epochs < 0 || o.batch_size < 2 || !(o.learning_rate >= 0.0) || !(o.decay_epochs > 0.0) ||
      !(o.decay_factor > 0.0))
    throw Error(ErrorKind::kInvalidArgument, "invalid training options");
}

void check_finite(double loss, int epoch, std::size_t batch, double lr) {
  if (std::isfinite(loss)) return;
  std::ostringstream msg;
  msg << "training loss became " << loss << " at epoch " << epoch << ", batch " << batch << " (lr " << lr << ")";
  throw Error(ErrorKind::kDivergence, msg.str());
}

struct BatchResult {
  double loss = 0.0;
  NetworkWeights grad;
};

BatchResult descriptor_batch(std::span<const TrainingPair> data, std::span<const std::size_t> batch,
                             const NetworkWeights& w, double lambda, bool with_grad, const IcosahedralGroup& group) {
  const std::size_t n = batch.size();
  std::vector<EmbedderTape> tapes(2 * n);
  parallel_for(2 * n, [&](std::size_t i) {
    const TrainingPair& p = data[batch[i / 2]];
    tapes[i] = embed_forward(i % 2 == 0 ? p.f0_anchor : p.f0_positive, w, group);
  });
  std::vector<Eigen::VectorXd> da(n), dp(n);
  std::vector<Matrix> fa(n), fp(n);
  std::vector<GroupElement> labels(n);
  for (std::size_t b = 0; b < n; ++b) {
    da[b] = tapes[2 * b].descriptor;
    dp[b] = tapes[2 * b + 1].descriptor;
    fa[b] = tapes[2 * b].fl;
    fp[b] = tapes[2 * b + 1].fl;
    labels[b] = data[batch[b]].label;
  }
  const DescriptorBatchLoss loss = descriptor_batch_loss(da, dp, fa, fp, labels, lambda, group);
  BatchResult out{loss.value, {}};
  if (!with_grad) return out;

  std::vector<NetworkWeights> per(2 * n);
  parallel_for(2 * n, [&](std::size_t i) {
    per[i] = w.zeros_like();
    const std::size_t b = i / 2;
    if (i % 2 == 0)
      embed_backward(tapes[i], w, loss.grad_f_anchor[b], loss.grad_d_anchor[b], per[i], group);
    else
      embed_backward(tapes[i], w, loss.grad_f_positive[b], loss.grad_d_positive[b], per[i], group);
  });
  out.grad = w.zeros_like();
  for (auto& g : per) add_into(out.grad, g, Part::kEmbedder);
  return out;
}

std::vector<GroupFeature> regressor_inputs(std::span<const TrainingPair> data, const NetworkWeights& w,
                                           const IcosahedralGroup& group) {
  std::vector<GroupFeature> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const TrainingPair& p = data[i];
    const GroupFeature fa = embed(p.f0_anchor, w, group);
    const GroupFeature fp = embed(p.f0_positive, w, group);
    out[i] = regressor_input(p.f0_anchor, fa, p.f0_positive, fp, p.label, group);
  });
  return out;
}

}  // namespace

EmbedderTape embed_forward(const GroupFeature& f0, const NetworkWeights& w, const IcosahedralGroup& group) {
  if (f0.values.rows() != icosa::kGroupOrder)
    throw Error(ErrorKind::kDimensionMismatch, "group feature must have 60 rows");
  EmbedderTape t;
  t.raw = conv_stack_forward(w.embedder, f0.values, t.lifted, t.pre, group);
  t.raw_norm = t.raw.norm();
  if (!(t.raw_norm > 0.0)) throw Error(ErrorKind::kDegenerateDescriptor, "embedder output is zero");
  t.fl = t.raw / t.raw_norm;
  t.mean = row_mean(t.fl);
  t.mean_norm = t.mean.norm();
  if (!(t.mean_norm > 0.0)) throw Error(ErrorKind::kDegenerateDescriptor, "pooled group feature is zero");
  t.descriptor = t.mean / t.mean_norm;
  return t;
}

void embed_backward(const EmbedderTape& t, const NetworkWeights& w, const Matrix& grad_fl,
                    const Eigen::VectorXd& grad_descriptor, NetworkWeights& grad, const IcosahedralGroup& group) {
  const Eigen::VectorXd dmean =
      (grad_descriptor - t.descriptor * t.descriptor.dot(grad_descriptor)) / t.mean_norm;
  Matrix dfl = grad_fl;
  dfl.rowwise() += dmean.transpose() / static_cast<double>(icosa::kGroupOrder);
  const double proj = (t.fl.array() * dfl.array()).sum();
  const Matrix draw = (dfl - proj * t.fl) / t.raw_norm;
  conv_stack_backward(w.embedder, t.lifted, t.pre, draw, grad.embedder, group);
}

RegressorTape regressor_forward(const GroupFeature& input, const NetworkWeights& w, const IcosahedralGroup& group) {
  if (!w.has_regressor()) throw Error(ErrorKind::kInvalidArgument, "network has no regressor weights");
  RegressorTape t;
  const Matrix x = conv_stack_forward(w.regressor_convs, input.values, t.lifted, t.pre, group);
  t.pooled = row_mean(x);
  Eigen::VectorXd v = t.pooled;
  for (std::size_t k = 0; k < w.regressor_mlp.size(); ++k) {
    const DenseLayer& l = w.regressor_mlp[k];
    t.mlp_in.push_back(v);
    t.mlp_pre.push_back(l.weights * v + l.bias);
    v = k + 1 < w.regressor_mlp.size() ? Eigen::VectorXd(t.mlp_pre.back().cwiseMax(0.0)) : t.mlp_pre.back();
  }
  t.output = Quat4(v[0], v[1], v[2], v[3]);
  return t;
}

void regressor_backward(const RegressorTape& t, const NetworkWeights& w, const Quat4& grad_output,
                        NetworkWeights& grad, const IcosahedralGroup& group) {
  Eigen::VectorXd g = grad_output;
  for (std::size_t k = w.regressor_mlp.size(); k-- > 0;) {
    if (k + 1 < w.regressor_mlp.size()) g = (t.mlp_pre[k].array() > 0.0).select(g, 0.0);
    grad.regressor_mlp[k].weights.noalias() += g * t.mlp_in[k].transpose();
    grad.regressor_mlp[k].bias += g;
    g = w.regressor_mlp[k].weights.transpose() * g;
  }
  Matrix dx(icosa::kGroupOrder, g.size());
  dx.rowwise() = g.transpose() / static_cast<double>(icosa::kGroupOrder);
  conv_stack_backward(w.regressor_convs, t.lifted, t.pre, std::move(dx), grad.regressor_convs, group);
}

TrainingPair make_training_pair(const backbone::Patch& anchor, const backbone::Patch& positive, const Mat3& rotation,
                                const backbone::Backbone& phi, const IcosahedralGroup& group) {
  TrainingPair p;
  p.f0_anchor = extract_group_feature(anchor, phi, group);
  p.f0_positive = extract_group_feature(positive, phi, group);
  p.rotation = rotation;
  p.label = group.quantize(rotation).first;
  return p;
}

TrainOptions regressor_train_options() {
  TrainOptions o;
  o.learning_rate = 1e-3;
  o.decay_epochs = 3.0;
  return o;
}

double evaluate_descriptor_loss(std::span<const TrainingPair> data, const NetworkWeights& w,
                                const TrainOptions& options, const IcosahedralGroup& group) {
  check_options(options);
  if (data.size() < 2) throw Error(ErrorKind::kInvalidArgument, "descriptor loss needs at least two pairs");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  for (const auto& batch : make_batches(order, options.batch_size))
    total += static_cast<double>(batch.size()) *
             descriptor_batch(data, batch, w, options.lambda, false, group).loss;
  return total / static_cast<double>(data.size());
}

NetworkWeights train_embedder(std::span<const TrainingPair> data, NetworkWeights w, const TrainOptions& options,
                              TrainReport* report, const IcosahedralGroup& group) {
  check_options(options);
  w.validate();
  if (data.size() < 2) throw Error(ErrorKind::kInvalidArgument, "training needs at least two pairs");
  if (report) report->epoch_loss = {evaluate_descriptor_loss(data, w, options, group)};

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Adam adam(w, Part::kEmbedder, options);
  std::size_t step = 0;
  const std::size_t steps_per_epoch = make_batches(order, options.batch_size).size();
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto batches = make_batches(order, options.batch_size);
    for (std::size_t b = 0; b < batches.size(); ++b, ++step) {
      const double lr = learning_rate(options, step, steps_per_epoch);
      BatchResult r = descriptor_batch(data, batches[b], w, options.lambda, true, group);
      check_finite(r.loss, epoch, b, lr);
      adam.step(w, r.grad, lr);
    }
    snap_to_float(w);
    if (report) {
      report->epoch_loss.push_back(evaluate_descriptor_loss(data, w, options, group));
      check_finite(report->epoch_loss.back(), epoch, batches.size(), learning_rate(options, step, steps_per_epoch));
    }
  }
  return w;
}

NetworkWeights train_embedder(std::span<const TrainingPair> data, const NetworkShape& shape,
                              const TrainOptions& options, TrainReport* report) {
  return train_embedder(data, init_weights(shape, options.seed, false), options, report);
}

double evaluate_regressor_loss(std::span<const TrainingPair> data, const NetworkWeights& w,
                               const IcosahedralGroup& group) {
  if (data.empty()) throw Error(ErrorKind::kInvalidArgument, "regressor loss of an empty set");
  const auto inputs = regressor_inputs(data, w, group);
  std::vector<double> loss(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    loss[i] = residual_loss(regress_residual(inputs[i], w, group), data[i].rotation, data[i].label, group, false).value;
  });
  return std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(data.size());
}

NetworkWeights train_regressor(std::span<const TrainingPair> data, NetworkWeights w, const TrainOptions& options,
                               TrainReport* report, const IcosahedralGroup& group) {
  check_options(options);
  w.validate();
  if (!w.has_regressor()) throw Error(ErrorKind::kInvalidArgument, "network has no regressor weights");
  if (data.empty()) throw Error(ErrorKind::kInvalidArgument, "training needs at least one pair");
  const auto inputs = regressor_inputs(data, w, group);
  auto mean_loss = [&] {
    std::vector<double> loss(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
      loss[i] = residual_loss(regress_residual(inputs[i], w, group), data[i].rotation, data[i].label, group, false)
                    .value;
    });
    return std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(data.size());
  };
  if (report) report->epoch_loss = {mean_loss()};

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Adam adam(w, Part::kRegressor, options);
  std::size_t step = 0;
  const std::size_t steps_per_epoch = make_batches(order, options.batch_size).size();
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto batches = make_batches(order, options.batch_size);
    for (std::size_t b = 0; b < batches.size(); ++b, ++step) {
      const auto& batch = batches[b];
      const double lr = learning_rate(options, step, steps_per_epoch);
      const double scale = 1.0 / static_cast<double>(batch.size());
      std::vector<NetworkWeights> per(batch.size());
      std::vector<double> loss(batch.size());
      parallel_for(batch.size(), [&](std::size_t i) {
        const std::size_t s = batch[i];
        const RegressorTape tape = regressor_forward(inputs[s], w, group);
        const ResidualLoss l = residual_loss(tape.output, data[s].rotation, data[s].label, group, false);
        loss[i] = l.value;
        per[i] = w.zeros_like();
        regressor_backward(tape, w, scale * l.grad_raw, per[i], group);
      });
      NetworkWeights grad = w.zeros_like();
      for (auto& g : per) add_into(grad, g, Part::kRegressor);
      check_finite(std::accumulate(loss.begin(), loss.end(), 0.0), epoch, b, lr);
      adam.step(w, grad, lr);
    }
    snap_to_float(w);
    if (report) report->epoch_loss.push_back(mean_loss());
  }
  return w;
}

}  // namespace icoreg::groupnet
