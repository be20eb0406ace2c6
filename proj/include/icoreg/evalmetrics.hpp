#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "icoreg/geom.hpp"
#include "icoreg/matchrot.hpp"
#include "icoreg/ransac.hpp"

namespace icoreg::evalmetrics {

using geom::RigidTransform;
using matchrot::Correspondence;

struct PairEvaluation {
  double inlier_ratio = 0.0;
  bool registration_correct = false;
  double rotation_error = 0.0;     // degrees
  double translation_error = 0.0;  // meters
  /// 1-based index of the first correct hypothesis.
  std::optional<std::size_t> iterations_to_success;

  friend bool operator==(const PairEvaluation&, const PairEvaluation&) = default;
};

/// Fraction of C with ‖R_gt·p + t_gt − q‖ ≤ τ_c; 0 for an empty set.
double correspondence_eval(std::span<const Correspondence> c, const RigidTransform& gt, double tau_c);

/// Fraction of pairs whose inlier ratio is strictly above `threshold`.
/// Throws Error(kInvalidArgument) on an empty list.
double fmr(std::span<const double> inlier_ratios, double threshold = 0.05);

enum class RrDistance { kRmse, kMean };

/// RMSE (or mean) of ‖T_est(x) − T_gt(x)‖ over the points. Throws
/// Error(kInvalidArgument) on an empty point set.
double alignment_distance(const RigidTransform& est, const RigidTransform& gt, std::span<const Vec3> points,
                          RrDistance kind = RrDistance::kRmse);

/// alignment_distance < τ_r.
bool rr(const RigidTransform& est, const RigidTransform& gt, std::span<const Vec3> points, double tau_r,
        RrDistance kind = RrDistance::kRmse);

struct PoseError {
  double rotation = 0.0;     // degrees, angle of R_estᵀ·R_gt
  double translation = 0.0;  // meters
};
PoseError pose_error(const RigidTransform& est, const RigidTransform& gt);

/// Walks the hypothesis stream of (C, config) up to `budget` draws and
/// returns the 1-based index of the first hypothesis accepted by `correct`.
std::optional<std::size_t> iterations_to_success(std::span<const Correspondence> c,
                                                 const ransac::RansacConfig& config, std::size_t budget,
                                                 const std::function<bool(const RigidTransform&)>& correct);

struct CurvePoint {
  std::size_t iterations = 0;
  double fraction = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

/// For each budget N, the fraction of pairs whose first correct hypothesis
/// has 1-based index ≤ N. Budgets are sorted and deduplicated. Throws
/// Error(kInvalidArgument) when there are no pairs.
std::vector<CurvePoint> success_curve(std::span<const std::optional<std::size_t>> first_success,
                                      std::span<const std::size_t> budgets);

}  // namespace icoreg::evalmetrics
