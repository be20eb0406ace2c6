#include "icoreg/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "icoreg/error.hpp"

namespace icoreg {

namespace {
constexpr std::size_t kLeafSize = 12;
}

KdTree::KdTree(std::vector<double> coords, std::size_t dim) : coords_(std::move(coords)), dim_(dim) {
  if (dim_ == 0 || coords_.size() % dim_ != 0)
    throw Error(ErrorKind::kDimensionMismatch, "kd-tree coordinate buffer is not a multiple of dim");
  order_.resize(size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!order_.empty()) {
    nodes_.reserve(2 * size() / kLeafSize + 2);
    build(0, order_.size());
  }
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  // Split on the axis of largest spread at the median.
  int axis = 0;
  double widest = -1.0;
  for (std::size_t a = 0; a < dim_; ++a) {
    double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
    for (std::size_t i = begin; i < end; ++i) {
      const double v = coords_[order_[i] * dim_ + a];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > widest) {
      widest = hi - lo;
      axis = static_cast<int>(a);
    }
  }
  if (widest <= 0.0) return id;  // all points coincide

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     return coords_[a * dim_ + axis] < coords_[b * dim_ + axis];
                   });
  const double split = coords_[order_[mid] * dim_ + axis];
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double KdTree::sq_dist(std::size_t point, std::span<const double> q) const {
  const double* p = coords_.data() + point * dim_;
  double d = 0.0;
  for (std::size_t a = 0; a < dim_; ++a) {
    const double t = p[a] - q[a];
    d += t * t;
  }
  return d;
}

void KdTree::nearest_rec(int node_id, std::span<const double> q, std::size_t& best,
                         double& best_d) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const double d = sq_dist(idx, q);
      if (d < best_d || (d == best_d && idx < best)) {
        best_d = d;
        best = idx;
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int first = diff < 0.0 ? node.left : node.right;
  const int second = diff < 0.0 ? node.right : node.left;
  nearest_rec(first, q, best, best_d);
  // Equality keeps the far side eligible for lower-index ties.
  if (diff * diff <= best_d) nearest_rec(second, q, best, best_d);
}

std::pair<std::size_t, double> KdTree::nearest(std::span<const double> query) const {
  if (nodes_.empty()) throw Error(ErrorKind::kInvalidArgument, "nearest() on an empty kd-tree");
  if (query.size() != dim_) throw Error(ErrorKind::kDimensionMismatch, "kd-tree query dimension");
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_d = std::numeric_limits<double>::infinity();
  nearest_rec(0, query, best, best_d);
  return {best, best_d};
}

void KdTree::radius_rec(int node_id, std::span<const double> q, double r2,
                        std::vector<std::size_t>& out) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i)
      if (sq_dist(order_[i], q) < r2) out.push_back(order_[i]);
    return;
  }
  const double diff = q[node.axis] - node.split;
  if (diff < 0.0 || diff * diff < r2) radius_rec(node.left, q, r2, out);
  if (diff >= 0.0 || diff * diff < r2) radius_rec(node.right, q, r2, out);
}

std::vector<std::size_t> KdTree::radius_search(std::span<const double> query, double radius) const {
  std::vector<std::size_t> out;
  if (nodes_.empty() || radius <= 0.0) return out;
  if (query.size() != dim_) throw Error(ErrorKind::kDimensionMismatch, "kd-tree query dimension");
  radius_rec(0, query, radius * radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace icoreg
