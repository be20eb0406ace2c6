#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "icoreg/backbone.hpp"
#include "icoreg/geom.hpp"
#include "icoreg/matchrot.hpp"

namespace icoreg::pipeline {

/// Putative correspondences with a known inlier set. Source points are
/// uniform in the cube [-extent, extent]^3.
struct CorrespondenceSynthConfig {
  std::size_t count = 1000;
  double inlier_ratio = 0.1;  // exactly round(ratio·count) inliers
  double extent = 1.0;
  double noise_sigma = 0.0;  // Gaussian noise on inlier targets, meters
  /// Probability that an inlier's coarse rotation is the ground-truth
  /// element; otherwise it is uniform over the group, like an outlier's.
  double coarse_accuracy = 1.0;
  /// Inliers get a refined rotation within this geodesic angle of the
  /// truth. Outliers get a Haar-random one. Negative leaves refined
  /// rotations unset.
  double refined_noise = 0.0;  // radians
  double max_angle = 3.141592653589793;
  double max_translation = 1.0;
  std::uint64_t seed = 0;
};

struct SyntheticCorrespondences {
  std::vector<matchrot::Correspondence> correspondences;
  std::vector<bool> is_inlier;
  geom::RigidTransform truth;
};

/// Deterministic per seed. Outlier targets are uniform in the cube mapped by
/// the truth, so they overlap the inlier region. Throws
/// Error(kInvalidArgument) on out-of-range fractions or sizes.
SyntheticCorrespondences synth_correspondences(const CorrespondenceSynthConfig& cfg);

/// Procedural scene ids accepted by sample_scene: "blocks" (boxes and
/// spheres on undulating ground with a ridge) and "terrain" (ground only).
std::vector<std::string> scene_shapes();

/// `count` points sampled uniformly by area from the scene surface, within
/// roughly [-1, 1]^2 × [0, 0.6] meters. Layout and sampling are
/// deterministic per seed. Throws Error(kInvalidArgument) on an unknown id.
geom::PointCloud sample_scene(const std::string& shape, std::size_t count, std::uint64_t seed);

struct SynthConfig {
  std::string base_shape = "blocks";
  std::size_t point_count = 60000;
  double overlap_fraction = 0.7;
  double noise_sigma = 0.0;  // meters, per coordinate
  double dropout_fraction = 0.0;
  double outlier_fraction = 0.0;
  double max_angle = 3.141592653589793;
  double max_translation = 1.0;
  std::uint64_t seed = 0;

  static constexpr std::size_t kMinPointCount = 1000;
  /// Throws Error(kInvalidArgument) on out-of-range fields.
  void validate() const;
};

struct SynthPair {
  geom::PointCloud p, q;
  /// Maps P's frame onto Q's: q ≈ truth(p).
  geom::RigidTransform truth;
};

/// Both views are index ranges of one scene sample sorted along a random
/// horizontal direction; each holds count/(2 − overlap) points and they
/// share overlap·|P| of them. Q is moved by `truth`. Each view then gets
/// independent dropout, Gaussian noise and uniform outliers inside its
/// bounding box, in that order. Deterministic per seed.
SynthPair synth_pair(const SynthConfig& cfg);

enum class Perturbation { kDropout, kNoisePoints };

/// kDropout removes round(fraction·n) neighbors chosen at random, keeping
/// the order of the rest. kNoisePoints appends ceil(fraction·n) points
/// uniform in the patch ball. Throws Error(kInvalidArgument) for a
/// fraction outside [0, 1).
backbone::Patch perturb_patch(const backbone::Patch& patch, Perturbation kind, double fraction,
                              std::uint64_t seed);

}  // namespace icoreg::pipeline
