#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "icoreg/geom.hpp"

namespace icoreg::backbone {

/// Local neighborhood of a point: every other cloud point strictly inside
/// `radius`, in center-relative coordinates (meters).
struct Patch {
  Vec3 center = Vec3::Zero();
  std::vector<Vec3> neighbors;
  double radius = 0.0;
};

/// Throws Error(kEmptyPatch) when no other point lies within the radius.
/// The index order of `neighbors` follows the cloud order.
Patch extract_patch(const geom::PointCloud& cloud, std::size_t center_index, double radius);
Patch extract_patch(const geom::PointCloud& cloud, const KdTree& tree, std::size_t center_index,
                    double radius);

/// Rotates the neighbor coordinates about the patch center.
Patch rotate_patch(const Patch& patch, const Mat3& rotation);

struct BackboneSpec {
  int shells = 4;
  int azimuth_bins = 4;
  int elevation_bins = 2;

  int output_dim() const { return shells * azimuth_bins * elevation_bins; }
  void validate() const;
};

/// A rotation-sensitive point-set feature extractor: neighbors (patch
/// frame) to a fixed-width vector.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual int output_dim() const = 0;
  /// Writes output_dim() values to `out`. Throws Error(kEmptyPatch) on no points.
  virtual void extract(std::span<const Vec3> neighbors, double radius, double* out) const = 0;
  /// Row k of the rotations.size() × output_dim() row-major `out` is the
  /// feature of the neighbors rotated by rotations[k].
  virtual void extract_rotated(std::span<const Vec3> neighbors, double radius, std::span<const Mat3> rotations,
                               double* out) const;

  Eigen::VectorXd operator()(const Patch& patch) const;
};

/// Soft spherical histogram in the patch's own axis-aligned frame.
///
/// Each neighbor spreads unit mass trilinearly over (radial shell,
/// elevation, azimuth) bin centers; azimuth wraps, the other two clamp at
/// the outermost centers. Bin index layout is shell-major:
/// (shell * elevation_bins + elevation) * azimuth_bins + azimuth. The result
/// is L2-normalized. No local reference frame is used, so rotating the
/// patch changes the feature.
class HistogramBackbone final : public Backbone {
 public:
  explicit HistogramBackbone(BackboneSpec spec = {});
  int output_dim() const override { return spec_.output_dim(); }
  void extract(std::span<const Vec3> neighbors, double radius, double* out) const override;
  /// Shares the radial split across rotations; rows agree with extract() on
  /// explicitly rotated points up to rounding of the radius.
  void extract_rotated(std::span<const Vec3> neighbors, double radius, std::span<const Mat3> rotations,
                       double* out) const override;
  const BackboneSpec& spec() const { return spec_; }

  /// Unnormalized bin masses (sum = number of points).
  Eigen::VectorXd accumulate(std::span<const Vec3> neighbors, double radius) const;

 private:
  BackboneSpec spec_;
};

Eigen::VectorXd phi_histogram(const Patch& patch, const BackboneSpec& spec = {});

}  // namespace icoreg::backbone
