#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icoreg/backbone.hpp"
#include "icoreg/evalmetrics.hpp"
#include "icoreg/geom.hpp"
#include "icoreg/groupnet.hpp"
#include "icoreg/matchrot.hpp"
#include "icoreg/ransac.hpp"
#include "icoreg/synth.hpp"
#include "icoreg/training.hpp"

namespace icoreg::pipeline {

using geom::PointCloud;
using geom::RigidTransform;
using matchrot::Correspondence;

/// Independent stream seeds from one base seed (splitmix64 of the mix).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

// ---------------------------------------------------------------------------
// Features

struct FeatureConfig {
  double voxel = 0.025;         // meters
  double patch_radius = 0.3;    // meters
  std::size_t keypoints = 500;  // target count after the planarity filter
  double planarity = 0.02;      // smallest unit-scaled covariance eigenvalue
  std::uint64_t seed = 0;

  /// Throws Error(kInvalidArgument).
  void validate() const;
};

/// A downsampled cloud with per-keypoint group features and descriptors.
/// Vectors indexed by keypoint slot run parallel to `keypoints`.
struct CloudFeatures {
  PointCloud cloud;
  KdTree tree;
  double patch_radius = 0.0;
  std::vector<std::size_t> keypoints;  // indices into `cloud`
  std::vector<icosa::GroupFeature> f0, fl;
  std::vector<Eigen::VectorXd> descriptors;
};

/// Voxel downsampling, then keypoints: cloud indices are visited in a
/// seeded uniformly random order and the first `keypoints` that pass the
/// planarity filter are kept. Features are computed in parallel and do not
/// depend on the thread count. Throws Error(kInvalidArgument) when no
/// keypoint survives.
CloudFeatures describe_cloud(const PointCloud& raw, const FeatureConfig& cfg, const backbone::Backbone& phi,
                             const groupnet::NetworkWeights& w);

/// Rebuilds the tree and descriptors from cloud, keypoints, f0 and fl.
void finalize_features(CloudFeatures& f);

/// Versioned little-endian binary ("ICOF"): cloud, patch radius, keypoints,
/// f0 and fl.
void save_features(const CloudFeatures& f, const std::filesystem::path& path);
CloudFeatures load_features(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Matching and per-correspondence rotations

/// Where Correspondence::refined_rotation comes from.
///   kRegressor: R_ε·R_c from the network (requires regressor weights).
///   kPatchIcp: point-to-point ICP between the two patches seeded at R_c.
///   kNone: left unset; OSE then uses R_c.
///   kAuto: kRegressor when weights have one, else kPatchIcp.
enum class RotationSource { kAuto, kRegressor, kPatchIcp, kNone };
const char* to_string(RotationSource s);
RotationSource parse_rotation_source(const std::string& name);

struct MatchConfig {
  RotationSource rotation_source = RotationSource::kAuto;
  int patch_icp_iterations = 30;
  double patch_icp_distance = 0.05;  // meters
};

/// Mutual nearest neighbors of the descriptors with keypoint coordinates,
/// coarse rotations and (per `cfg`) refined rotations. Indices refer to the
/// downsampled clouds. Returns the resolved rotation source through
/// `used` when given.
std::vector<Correspondence> match_features(const CloudFeatures& p, const CloudFeatures& q,
                                           const groupnet::NetworkWeights& w, const MatchConfig& cfg,
                                           RotationSource* used = nullptr);

/// CSV with a header row: indices, both points, descriptor distance,
/// coarse element, then nine row-major refined-rotation entries (empty when
/// unset). Doubles are written with round-trip precision.
void write_correspondences(std::span<const Correspondence> c, const std::filesystem::path& path);
/// Throws Error(kFormat) on a malformed row.
std::vector<Correspondence> read_correspondences(const std::filesystem::path& path);

/// Training pairs from synthetic scenes: a planar-filtered keypoint patch of
/// a voxelized scene sample and an independently thinned copy rotated by a
/// Haar-random rotation. Deterministic per seed.
struct TrainingSetConfig {
  std::size_t pairs = 200;
  FeatureConfig features;
  std::size_t scene_points = 30000;
  double dropout = 0.1;  // per side
  std::uint64_t seed = 0;
};
std::vector<groupnet::TrainingPair> synth_training_pairs(const TrainingSetConfig& cfg, const backbone::Backbone& phi);

// ---------------------------------------------------------------------------
// Configuration

/// Line-oriented "key = value" text. '#' starts a comment; blank lines are
/// ignored. Throws Error(kFormat) on a line without '=' or a repeated key.
std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source = "<input>");
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

/// Reads an affine transform as 12 numbers (row-major rotation, then
/// translation) or as a 4×4 row-major matrix (16 numbers). Throws
/// Error(kFormat) or Error(kInvalidRotation).
RigidTransform parse_transform(const std::string& text);
std::string format_transform(const RigidTransform& t);

struct BenchmarkConfig {
  std::size_t pairs = 50;
  std::uint64_t seed = 0;
  std::size_t trials = 1;
  /// Non-empty: one pair per line "p.ply q.ply <12 or 16 numbers>" with the
  /// transform mapping P onto Q. Relative paths resolve against the list.
  std::string pair_list;

  SynthConfig synth;  // seed and noise are per pair; see pair_synth_config
  FeatureConfig features;
  MatchConfig match;
  std::string weights;  // empty: random init with weights_seed
  std::uint64_t weights_seed = 1;

  std::vector<ransac::Mode> modes = {ransac::Mode::kVanilla, ransac::Mode::kCrv, ransac::Mode::kOse};
  std::vector<std::size_t> budgets = {1000};
  double inlier_threshold = 0.075;  // τ, meters
  bool refit = true;
  bool distance_check = false;

  double tau_c = 0.1;  // correspondence inlier distance, meters
  double tau_r = 0.2;  // registration distance, meters
  evalmetrics::RrDistance rr_distance = evalmetrics::RrDistance::kRmse;
  std::vector<std::size_t> curve_budgets = {1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};

  bool icp = false;
  geom::IcpOptions icp_options{30, 1e-6, 0.05};

  BenchmarkConfig();
  /// Unknown keys and unparsable values throw Error(kInvalidArgument).
  void apply(const std::map<std::string, std::string>& kv);
  /// Every key accepted by apply(), with the current values.
  std::map<std::string, std::string> to_key_values() const;
  void validate() const;
  /// Synthetic settings for pair `index`.
  SynthConfig pair_synth_config(std::size_t index) const;
};

// ---------------------------------------------------------------------------
// Reports

/// One RANSAC run of one pair.
struct RunRecord {
  ransac::Mode mode = ransac::Mode::kVanilla;
  std::size_t budget = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  evalmetrics::PairEvaluation eval;
  double alignment_distance = 0.0;  // meters, before comparison with τ_r
  std::size_t inliers = 0;
  bool icp_applied = false;
  double seconds = 0.0;  // t₂: RANSAC plus optional ICP
  RigidTransform transform;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct PairRecord {
  std::size_t index = 0;
  std::string p_source, q_source;
  RigidTransform truth;
  std::size_t p_points = 0, q_points = 0;  // after downsampling
  std::size_t p_keypoints = 0, q_keypoints = 0;
  std::size_t correspondences = 0;
  double inlier_ratio = 0.0;
  std::string rotation_source;
  double feature_seconds_p = 0.0, feature_seconds_q = 0.0;  // t₁
  double match_seconds = 0.0;
  /// Empty on success. A failed pair has no runs and counts as unregistered.
  std::string failure;
  std::vector<RunRecord> runs;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

/// Metrics of one (mode, budget) block over all pairs and trials.
struct ModeSummary {
  ransac::Mode mode = ransac::Mode::kVanilla;
  std::size_t budget = 0;
  double rr_mean = 0.0;  // over trials of the per-trial recall
  double rr_std = 0.0;   // population deviation across trials
  double median_rotation_error = 0.0;     // degrees, registered runs
  double median_translation_error = 0.0;  // meters, registered runs
  double mean_seconds = 0.0;

  friend bool operator==(const ModeSummary&, const ModeSummary&) = default;
};

struct CurveBlock {
  ransac::Mode mode = ransac::Mode::kVanilla;
  std::vector<evalmetrics::CurvePoint> points;
  double median_iterations = 0.0;  // over runs with a success; 0 if none

  friend bool operator==(const CurveBlock&, const CurveBlock&) = default;
};

struct BenchmarkReport {
  static constexpr const char* kSchema = "icoreg.report/1";
  std::string tool_version;
  std::map<std::string, std::string> config;
  std::vector<PairRecord> pairs;
  double fmr = 0.0;
  double mean_inlier_ratio = 0.0;
  std::vector<ModeSummary> summaries;
  std::vector<CurveBlock> curves;
  std::size_t failures = 0;
  double mean_feature_seconds = 0.0;    // t₁ per cloud
  double mean_alignment_seconds = 0.0;  // t₂ per run
  double total_seconds = 0.0;           // T

  friend bool operator==(const BenchmarkReport&, const BenchmarkReport&) = default;
};

const char* tool_version();

/// Fills every aggregate of `report` from its pair records. `curve_budgets`
/// are the budgets of the success curves.
void aggregate(BenchmarkReport& report, std::span<const ransac::Mode> modes, std::span<const std::size_t> budgets,
               std::size_t trials, std::span<const std::size_t> curve_budgets);

/// Synthesizes or loads each pair, extracts features, matches, and runs
/// every (mode, budget, trial), then aggregates. Pairs run in parallel;
/// every random stream derives from the config seed, so the report is
/// independent of the thread count apart from timings. A pair whose stage
/// throws is recorded with its failure and the run continues.
BenchmarkReport run_benchmark(const BenchmarkConfig& cfg);

std::string report_to_json(const BenchmarkReport& report);
/// Throws Error(kFormat) on a schema mismatch or malformed document.
BenchmarkReport report_from_json(const std::string& text);

/// Plain-text table: one row per (mode, budget) plus FMR, IR and timings.
std::string summary_table(const BenchmarkReport& report);

}  // namespace icoreg::pipeline
