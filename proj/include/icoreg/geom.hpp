#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "icoreg/kdtree.hpp"
#include "icoreg/rotation.hpp"

namespace icoreg::geom {

/// Points in meters. Coordinates must be finite.
struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  /// Throws Error(kInvalidArgument) on a NaN or infinite coordinate.
  void validate() const;
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  Vec3 operator()(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  /// (*this ∘ other)(p) = (*this)(other(p)).
  RigidTransform operator*(const RigidTransform& other) const;
  /// Exact coefficient equality.
  friend bool operator==(const RigidTransform& a, const RigidTransform& b) {
    return a.rotation == b.rotation && a.translation == b.translation;
  }
};

PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud);

/// KD-tree over cloud coordinates (3-d).
KdTree make_kdtree(const PointCloud& cloud);
KdTree make_kdtree(std::span<const Vec3> points);

/// Least-squares rigid transform mapping src[i] onto dst[i] (SVD, with
/// reflection correction). Throws Error(kDegenerateGeometry) for fewer than
/// three pairs or collinear/coincident source or target points.
RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst);

struct IcpOptions {
  int max_iterations = 50;
  double convergence_tolerance = 1e-6;  // meters of RMSE improvement
  /// Associations farther than this are truncated; infinity means plain
  /// point-to-point ICP.
  double max_correspondence_distance = std::numeric_limits<double>::infinity();
};

struct IcpResult {
  RigidTransform transform;
  /// Truncated RMSE, sqrt(mean(min(d², τ²))), at the initial transform
  /// followed by each accepted iteration. Non-increasing.
  std::vector<double> rmse_trace;
  /// RMSE over associations within the correspondence distance, at the
  /// returned transform.
  double inlier_rmse = 0.0;
  std::size_t inlier_count = 0;
  int iterations = 0;
};

/// Point-to-point ICP with exact nearest-neighbor association and Kabsch
/// updates. The returned transform never scores worse than `init`.
IcpResult icp(const PointCloud& src, const PointCloud& dst, const RigidTransform& init,
              const IcpOptions& options = {});

/// One centroid per occupied voxel, ordered by voxel key.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

/// Keeps keypoints whose radius neighborhood, in coordinates divided by the
/// radius, has smallest covariance eigenvalue >= min_eigenvalue. Keypoints
/// with fewer than three neighbors are dropped.
std::vector<std::size_t> planarity_filter(const PointCloud& cloud, const KdTree& tree,
                                          std::span<const std::size_t> keypoints, double radius,
                                          double min_eigenvalue = 0.03);
std::vector<std::size_t> planarity_filter(const PointCloud& cloud,
                                          std::span<const std::size_t> keypoints, double radius,
                                          double min_eigenvalue = 0.03);

/// Smallest eigenvalue of the unit-scaled neighborhood covariance; negative
/// when the neighborhood has fewer than three points.
double neighborhood_min_eigenvalue(const PointCloud& cloud, const KdTree& tree,
                                   std::size_t center, double radius);

/// Uniform axis, angle uniform in [0, max_angle], translation uniform in the
/// box [-max_translation, max_translation]^3. Deterministic per seed.
RigidTransform random_transform(std::uint64_t seed, double max_angle, double max_translation);

}  // namespace icoreg::geom
