#include <cmath>
#include <limits>

#include "icoreg/error.hpp"
#include "icoreg/training.hpp"

namespace icoreg::groupnet {

InvariantLoss invariant_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                             std::span<const Eigen::VectorXd> negatives) {
  if (negatives.empty()) throw Error(ErrorKind::kInvalidArgument, "invariant loss needs at least one negative");
  if (anchor.size() != positive.size())
    throw Error(ErrorKind::kDimensionMismatch, "descriptor widths differ");
  for (const auto& n : negatives)
    if (n.size() != anchor.size()) throw Error(ErrorKind::kDimensionMismatch, "descriptor widths differ");

  InvariantLoss out;
  const Eigen::VectorXd da = anchor - positive;
  const double a = da.norm();
  const double ea = std::exp(a);
  std::vector<double> b(negatives.size()), eb(negatives.size());
  double sum_eb = 0.0;
  for (std::size_t n = 0; n < negatives.size(); ++n) {
    b[n] = (anchor - negatives[n]).norm();
    eb[n] = std::exp(b[n]);
    sum_eb += eb[n];
    if (b[n] < b[out.hardest]) out.hardest = n;
  }
  const double num = ea - eb[out.hardest];
  const double den = ea + sum_eb;
  out.value = num / den;

  // d/da and d/db_n of num/den; distances of zero contribute no gradient.
  const double dl_da = ea * (den - num) / (den * den);
  out.grad_anchor = Eigen::VectorXd::Zero(anchor.size());
  out.grad_positive = Eigen::VectorXd::Zero(anchor.size());
  if (a > 0.0) {
    out.grad_anchor += dl_da * da / a;
    out.grad_positive -= dl_da * da / a;
  }
  out.grad_negatives.assign(negatives.size(), Eigen::VectorXd::Zero(anchor.size()));
  for (std::size_t n = 0; n < negatives.size(); ++n) {
    double dl_db = -num * eb[n] / (den * den);
    if (n == out.hardest) dl_db -= eb[n] / den;
    if (b[n] > 0.0) {
      const Eigen::VectorXd u = (anchor - negatives[n]) / b[n];
      out.grad_anchor += dl_db * u;
      out.grad_negatives[n] = -dl_db * u;
    }
  }
  return out;
}

EquivarianceLoss equivariance_loss(const Matrix& query, const Matrix& reference, GroupElement label,
                                   const IcosahedralGroup& group) {
  if (query.rows() != icosa::kGroupOrder || reference.rows() != icosa::kGroupOrder ||
      query.cols() != reference.cols())
    throw Error(ErrorKind::kDimensionMismatch, "equivariance loss needs two 60-row features of equal width");
  constexpr int G = icosa::kGroupOrder;
  EquivarianceLoss out;
  out.logits.resize(G);
  // z_g = Σ_r query(r) · reference(r·g)
  for (int g = 0; g < G; ++g) {
    double z = 0.0;
    for (int r = 0; r < G; ++r)
      z += query.row(r).dot(reference.row(group.compose(GroupElement(r), GroupElement(g)).index));
    out.logits[g] = z;
  }
  const double zmax = out.logits.maxCoeff();
  const Eigen::VectorXd e = (out.logits.array() - zmax).exp();
  const double sum = e.sum();
  out.value = zmax + std::log(sum) - out.logits[label.index];

  Eigen::VectorXd delta = e / sum;
  delta[label.index] -= 1.0;
  out.grad_query = Matrix::Zero(G, query.cols());
  out.grad_reference = Matrix::Zero(G, query.cols());
  for (int g = 0; g < G; ++g)
    for (int r = 0; r < G; ++r) {
      const int rg = group.compose(GroupElement(r), GroupElement(g)).index;
      out.grad_query.row(r) += delta[g] * reference.row(rg);
      out.grad_reference.row(rg) += delta[g] * query.row(r);
    }
  return out;
}

ResidualLoss residual_loss(const Quat4& raw_prediction, const Mat3& rotation, GroupElement label,
                           const IcosahedralGroup& group, bool warn_nonunit) {
  const double norm = raw_prediction.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw Error(ErrorKind::kInvalidArgument, "predicted residual quaternion is zero or non-finite");
  if (warn_nonunit && std::abs(norm - 1.0) > 1e-6) warn("renormalizing non-unit residual quaternion");
  const Quat4 q = raw_prediction / norm;

  ResidualLoss out;
  out.target = to_quaternion(rotation * group.rotation(label).transpose());
  if (q.dot(out.target) < 0.0) out.target = -out.target;
  const Quat4 u = q - out.target;
  out.value = u.norm();
  if (out.value > 0.0) {
    const Quat4 g = u / out.value;
    out.grad_raw = (g - q * q.dot(g)) / norm;
  }
  return out;
}

DescriptorBatchLoss descriptor_batch_loss(std::span<const Eigen::VectorXd> d_anchor,
                                          std::span<const Eigen::VectorXd> d_positive,
                                          std::span<const Matrix> f_anchor, std::span<const Matrix> f_positive,
                                          std::span<const GroupElement> labels, double lambda,
                                          const IcosahedralGroup& group) {
  const std::size_t n = d_anchor.size();
  if (d_positive.size() != n || f_anchor.size() != n || f_positive.size() != n || labels.size() != n)
    throw Error(ErrorKind::kDimensionMismatch, "batch inputs differ in length");
  if (n < 2) throw Error(ErrorKind::kInvalidArgument, "descriptor loss needs a batch of at least two pairs");

  DescriptorBatchLoss out;
  out.grad_d_anchor.assign(n, Eigen::VectorXd::Zero(d_anchor[0].size()));
  out.grad_d_positive.assign(n, Eigen::VectorXd::Zero(d_anchor[0].size()));
  out.grad_f_anchor.resize(n);
  out.grad_f_positive.resize(n);
  const double scale = 1.0 / static_cast<double>(n);

  std::vector<Eigen::VectorXd> negatives;
  negatives.reserve(n - 1);
  for (std::size_t b = 0; b < n; ++b) {
    negatives.clear();
    for (std::size_t c = 0; c < n; ++c)
      if (c != b) negatives.push_back(d_positive[c]);
    const InvariantLoss l1 = invariant_loss(d_anchor[b], d_positive[b], negatives);
    const EquivarianceLoss l2 = equivariance_loss(f_positive[b], f_anchor[b], labels[b], group);
    out.invariant += scale * l1.value;
    out.equivariance += scale * l2.value;

    out.grad_d_anchor[b] += lambda * scale * l1.grad_anchor;
    out.grad_d_positive[b] += lambda * scale * l1.grad_positive;
    for (std::size_t c = 0, k = 0; c < n; ++c)
      if (c != b) out.grad_d_positive[c] += lambda * scale * l1.grad_negatives[k++];
    out.grad_f_positive[b] = scale * l2.grad_query;
    out.grad_f_anchor[b] = scale * l2.grad_reference;
  }
  out.value = lambda * out.invariant + out.equivariance;
  return out;
}

}  // namespace icoreg::groupnet
