#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "icoreg/groupnet.hpp"

namespace icoreg::matchrot {

using icosa::GroupElement;
using icosa::GroupFeature;

/// A putative match between keypoint p_index of P and q_index of Q.
struct Correspondence {
  std::size_t p_index = 0, q_index = 0;
  Vec3 p = Vec3::Zero(), q = Vec3::Zero();
  double desc_dist = 0.0;
  GroupElement coarse_rotation;
  std::optional<Mat3> refined_rotation;
};

struct Match {
  std::size_t p_index, q_index;
  double distance;

  friend bool operator==(const Match&, const Match&) = default;
};

/// Mutual nearest neighbors under L2, sorted by p_index. Nearest-neighbor
/// ties go to the lowest index. Throws Error(kInvalidArgument) on an empty
/// side and Error(kDimensionMismatch) on unequal widths.
std::vector<Match> match_mutual_nn(std::span<const Eigen::VectorXd> descs_p,
                                   std::span<const Eigen::VectorXd> descs_q);

/// argmin_g ‖f_q − permute(f_p, g)‖ with ties to the lowest index, and the
/// minimal distance.
std::pair<GroupElement, double> coarse_rotation(const GroupFeature& f_p, const GroupFeature& f_q,
                                                const icosa::IcosahedralGroup& group = icosa::group());

/// R_ε · R_c where R_ε is the regressed residual quaternion, normalized.
/// Throws Error(kInvalidArgument) when `w` has no regressor.
Mat3 refine_rotation(const GroupFeature& f0_p, const GroupFeature& fl_p, const GroupFeature& f0_q,
                     const GroupFeature& fl_q, GroupElement coarse, const groupnet::NetworkWeights& w,
                     const icosa::IcosahedralGroup& group = icosa::group());

}  // namespace icoreg::matchrot
