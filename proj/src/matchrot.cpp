#include "icoreg/matchrot.hpp"

#include <cmath>
#include <limits>

#include "icoreg/error.hpp"
#include "icoreg/kdtree.hpp"

namespace icoreg::matchrot {

namespace {

KdTree descriptor_tree(std::span<const Eigen::VectorXd> descs) {
  const auto dim = static_cast<std::size_t>(descs.front().size());
  std::vector<double> coords;
  coords.reserve(descs.size() * dim);
  for (const auto& d : descs) {
    if (static_cast<std::size_t>(d.size()) != dim)
      throw Error(ErrorKind::kDimensionMismatch, "descriptors differ in width");
    coords.insert(coords.end(), d.data(), d.data() + d.size());
  }
  return KdTree(std::move(coords), dim);
}

}  // namespace

std::vector<Match> match_mutual_nn(std::span<const Eigen::VectorXd> descs_p,
                                   std::span<const Eigen::VectorXd> descs_q) {
  if (descs_p.empty() || descs_q.empty()) throw Error(ErrorKind::kInvalidArgument, "empty descriptor set");
  if (descs_p.front().size() != descs_q.front().size())
    throw Error(ErrorKind::kDimensionMismatch, "descriptor sets differ in width");
  const KdTree tree_p = descriptor_tree(descs_p);
  const KdTree tree_q = descriptor_tree(descs_q);
  std::vector<Match> out;
  for (std::size_t i = 0; i < descs_p.size(); ++i) {
    const std::size_t j = tree_q.nearest(std::span<const double>(descs_p[i].data(), descs_p[i].size())).first;
    const std::size_t back = tree_p.nearest(std::span<const double>(descs_q[j].data(), descs_q[j].size())).first;
    if (back == i) out.push_back({i, j, (descs_p[i] - descs_q[j]).norm()});
  }
  return out;
}

std::pair<GroupElement, double> coarse_rotation(const GroupFeature& f_p, const GroupFeature& f_q,
                                                const icosa::IcosahedralGroup& group) {
  if (f_p.values.rows() != icosa::kGroupOrder || f_q.values.rows() != icosa::kGroupOrder ||
      f_p.dim() != f_q.dim())
    throw Error(ErrorKind::kDimensionMismatch, "coarse rotation needs two 60-row features of equal width");
  GroupElement best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int g = 0; g < icosa::kGroupOrder; ++g) {
    // permute(f_p, g)(r) = f_p(r·g)
    double d2 = 0.0;
    for (int r = 0; r < icosa::kGroupOrder; ++r)
      d2 += (f_q.values.row(r) - f_p.values.row(group.compose(GroupElement(r), GroupElement(g)).index)).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = GroupElement(g);
    }
  }
  return {best, std::sqrt(best_d2)};
}

Mat3 refine_rotation(const GroupFeature& f0_p, const GroupFeature& fl_p, const GroupFeature& f0_q,
                     const GroupFeature& fl_q, GroupElement coarse, const groupnet::NetworkWeights& w,
                     const icosa::IcosahedralGroup& group) {
  if (!w.has_regressor()) throw Error(ErrorKind::kInvalidArgument, "refinement needs regressor weights");
  const Quat4 q = groupnet::regress_residual(groupnet::regressor_input(f0_p, fl_p, f0_q, fl_q, coarse, group), w, group);
  if (!(q.norm() > 0.0) || !q.allFinite())
    throw Error(ErrorKind::kInvalidRotation, "regressor produced a zero or non-finite quaternion");
  return from_quaternion(q) * group.rotation(coarse);
}

}  // namespace icoreg::matchrot
