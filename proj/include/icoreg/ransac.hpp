#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "icoreg/geom.hpp"
#include "icoreg/matchrot.hpp"

namespace icoreg::ransac {

using geom::RigidTransform;
using matchrot::Correspondence;

enum class Mode { kVanilla, kCrv, kOse };

const char* to_string(Mode mode);
/// Accepts "vanilla", "crv" and "ose". Throws Error(kInvalidArgument).
Mode parse_mode(const std::string& name);

struct RansacConfig {
  Mode mode = Mode::kVanilla;
  std::size_t max_iterations = 1000;
  double inlier_threshold = 0.1;  // meters
  std::uint64_t seed = 0;
  bool refit = true;
  /// Rejects triplets whose leg lengths in P and Q disagree by more than
  /// this ratio (vanilla and crv only).
  bool distance_check = false;
  double distance_check_ratio = 0.9;

  /// Throws Error(kInvalidArgument) unless max_iterations ≥ 1, τ > 0 and
  /// the ratio lies in (0, 1].
  void validate() const;
};

/// One draw from the hypothesis stream. `transform` is empty when the
/// sample was rejected by the distance check or was geometrically
/// degenerate; such draws still consume budget.
struct Hypothesis {
  std::size_t index = 0;
  std::array<std::size_t, 3> members{};
  std::size_t member_count = 0;
  std::optional<RigidTransform> transform;
};

/// Deterministic sequence of hypotheses for (C, config). The first k draws
/// do not depend on max_iterations, so a larger budget extends a smaller
/// one.
class HypothesisStream {
 public:
  /// Throws Error(kInvalidArgument) for too few correspondences for the mode
  /// (three for vanilla and crv, one for ose). `c` must outlive the stream.
  HypothesisStream(std::span<const Correspondence> c, const RansacConfig& config);

  /// Empty once OSE has enumerated every correspondence. Vanilla and crv
  /// streams never end.
  std::optional<Hypothesis> next();

  /// CRV found no coarse-rotation bucket with three members and samples
  /// like vanilla instead.
  bool fell_back() const { return fell_back_; }
  std::size_t drawn() const { return drawn_; }

 private:
  std::optional<RigidTransform> triplet_transform(const std::array<std::size_t, 3>& m) const;
  std::array<std::size_t, 3> uniform_triplet(std::span<const std::size_t> pool);

  std::span<const Correspondence> c_;
  RansacConfig config_;
  std::mt19937_64 rng_;
  std::size_t drawn_ = 0;
  bool fell_back_ = false;
  std::vector<std::size_t> all_;
  std::vector<std::vector<std::size_t>> buckets_;  // crv buckets with ≥ 3 members
  std::vector<std::uint64_t> bucket_cumulative_;   // running sum of C(size, 3)
  std::vector<std::size_t> order_;                 // ose visiting order
};

struct RegistrationResult {
  RigidTransform transform;
  /// count_inliers(transform, C, τ) for the returned transform.
  std::vector<std::size_t> inlier_indices;
  std::size_t hypotheses_evaluated = 0;
  std::uint64_t seed = 0;
  /// Winning hypothesis and its inlier count before any refit. Empty when
  /// no draw produced a transform.
  std::optional<std::size_t> best_hypothesis;
  std::size_t best_hypothesis_inliers = 0;
  bool refitted = false;
  bool fell_back = false;
  std::vector<std::string> warnings;
};

/// Indices i with ‖R·p_i + t − q_i‖ ≤ τ, ascending.
std::vector<std::size_t> count_inliers(const RigidTransform& t, std::span<const Correspondence> c,
                                       double tau);

/// Fixed-budget hypothesize-and-verify. The winner maximizes inlier count,
/// ties to the earlier hypothesis. With refit, the winner is replaced by the
/// Kabsch fit on its inliers when it has at least three.
RegistrationResult run_ransac(std::span<const Correspondence> c, const RansacConfig& config);

}  // namespace icoreg::ransac
