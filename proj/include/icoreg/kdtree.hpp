#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace icoreg {

/// Static KD-tree over points of any fixed dimension. Exact queries; equal
/// distances resolve to the lowest point index so results match a linear
/// scan bit-for-bit.
class KdTree {
 public:
  KdTree() = default;
  /// `coords` holds `count` points of `dim` doubles each, row-major.
  KdTree(std::vector<double> coords, std::size_t dim);

  std::size_t size() const { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  std::size_t dim() const { return dim_; }

  /// (index, squared distance) of the nearest point. Tree must be non-empty.
  std::pair<std::size_t, double> nearest(std::span<const double> query) const;

  /// Indices with distance strictly below `radius`, ascending.
  std::vector<std::size_t> radius_search(std::span<const double> query, double radius) const;

 private:
  struct Node {
    std::size_t begin, end;  // range in order_
    int axis = -1;           // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  double sq_dist(std::size_t point, std::span<const double> q) const;
  void nearest_rec(int node, std::span<const double> q, std::size_t& best, double& best_d) const;
  void radius_rec(int node, std::span<const double> q, double r2, std::vector<std::size_t>& out) const;

  std::vector<double> coords_;
  std::size_t dim_ = 0;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace icoreg
