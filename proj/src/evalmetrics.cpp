#include "icoreg/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "icoreg/error.hpp"

namespace icoreg::evalmetrics {

double correspondence_eval(std::span<const Correspondence> c, const RigidTransform& gt, double tau_c) {
  if (c.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& ci : c) n += (gt(ci.p) - ci.q).norm() <= tau_c;
  return static_cast<double>(n) / static_cast<double>(c.size());
}

double fmr(std::span<const double> inlier_ratios, double threshold) {
  if (inlier_ratios.empty()) throw Error(ErrorKind::kInvalidArgument, "fmr of an empty pair set");
  const auto n = std::count_if(inlier_ratios.begin(), inlier_ratios.end(), [&](double r) { return r > threshold; });
  return static_cast<double>(n) / static_cast<double>(inlier_ratios.size());
}

double alignment_distance(const RigidTransform& est, const RigidTransform& gt, std::span<const Vec3> points,
                          RrDistance kind) {
  if (points.empty()) throw Error(ErrorKind::kInvalidArgument, "alignment distance over no points");
  double sum = 0.0;
  for (const auto& x : points) {
    const double d = (est(x) - gt(x)).norm();
    sum += kind == RrDistance::kRmse ? d * d : d;
  }
  const double mean = sum / static_cast<double>(points.size());
  return kind == RrDistance::kRmse ? std::sqrt(mean) : mean;
}

bool rr(const RigidTransform& est, const RigidTransform& gt, std::span<const Vec3> points, double tau_r,
        RrDistance kind) {
  return alignment_distance(est, gt, points, kind) < tau_r;
}

PoseError pose_error(const RigidTransform& est, const RigidTransform& gt) {
  return {rotation_angle(est.rotation.transpose() * gt.rotation) * 180.0 / std::numbers::pi,
          (est.translation - gt.translation).norm()};
}

std::optional<std::size_t> iterations_to_success(std::span<const Correspondence> c,
                                                 const ransac::RansacConfig& config, std::size_t budget,
                                                 const std::function<bool(const RigidTransform&)>& correct) {
  ransac::HypothesisStream stream(c, config);
  for (std::size_t k = 0; k < budget; ++k) {
    const auto h = stream.next();
    if (!h) break;
    if (h->transform && correct(*h->transform)) return h->index + 1;
  }
  return std::nullopt;
}

std::vector<CurvePoint> success_curve(std::span<const std::optional<std::size_t>> first_success,
                                      std::span<const std::size_t> budgets) {
  if (first_success.empty()) throw Error(ErrorKind::kInvalidArgument, "success curve over no pairs");
  std::vector<std::size_t> n(budgets.begin(), budgets.end());
  std::sort(n.begin(), n.end());
  n.erase(std::unique(n.begin(), n.end()), n.end());
  std::vector<CurvePoint> out;
  for (const std::size_t budget : n) {
    const auto hits = std::count_if(first_success.begin(), first_success.end(),
                                    [&](const auto& k) { return k && *k <= budget; });
    out.push_back({budget, static_cast<double>(hits) / static_cast<double>(first_success.size())});
  }
  return out;
}

}  // namespace icoreg::evalmetrics
