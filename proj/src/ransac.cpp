#include "icoreg/ransac.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "icoreg/error.hpp"
#include "icoreg/parallel.hpp"

namespace icoreg::ransac {

namespace {

std::uint64_t choose3(std::uint64_t n) { return n < 3 ? 0 : n * (n - 1) * (n - 2) / 6; }

bool legs_compatible(const Correspondence& a, const Correspondence& b, double ratio) {
  const double dp = (a.p - b.p).norm(), dq = (a.q - b.q).norm();
  const double hi = std::max(dp, dq);
  return hi == 0.0 || std::min(dp, dq) / hi >= ratio;
}

}  // namespace

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kVanilla: return "vanilla";
    case Mode::kCrv: return "crv";
    case Mode::kOse: return "ose";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  if (name == "vanilla") return Mode::kVanilla;
  if (name == "crv") return Mode::kCrv;
  if (name == "ose") return Mode::kOse;
  throw Error(ErrorKind::kInvalidArgument, "unknown RANSAC mode '" + name + "'");
}

void RansacConfig::validate() const {
  if (max_iterations < 1) throw Error(ErrorKind::kInvalidArgument, "max_iterations must be at least 1");
  if (!(inlier_threshold > 0.0) || !std::isfinite(inlier_threshold))
    throw Error(ErrorKind::kInvalidArgument, "inlier threshold must be positive and finite");
  if (!(distance_check_ratio > 0.0 && distance_check_ratio <= 1.0))
    throw Error(ErrorKind::kInvalidArgument, "distance check ratio must lie in (0, 1]");
}

HypothesisStream::HypothesisStream(std::span<const Correspondence> c, const RansacConfig& config)
    : c_(c), config_(config), rng_(config.seed) {
  config_.validate();
  const std::size_t need = config.mode == Mode::kOse ? 1 : 3;
  if (c.size() < need)
    throw Error(ErrorKind::kInvalidArgument, std::string(to_string(config.mode)) + " needs at least " +
                                                 std::to_string(need) + " correspondences, got " +
                                                 std::to_string(c.size()));
  all_.resize(c.size());
  std::iota(all_.begin(), all_.end(), std::size_t{0});
  if (config.mode == Mode::kCrv) {
    std::array<std::vector<std::size_t>, icosa::kGroupOrder> by_element;
    for (std::size_t i = 0; i < c.size(); ++i) by_element[c[i].coarse_rotation.index].push_back(i);
    std::uint64_t total = 0;
    for (auto& b : by_element) {
      if (b.size() < 3) continue;
      total += choose3(b.size());
      buckets_.push_back(std::move(b));
      bucket_cumulative_.push_back(total);
    }
    fell_back_ = buckets_.empty();
  } else if (config.mode == Mode::kOse) {
    order_ = all_;
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
}

std::array<std::size_t, 3> HypothesisStream::uniform_triplet(std::span<const std::size_t> pool) {
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::array<std::size_t, 3> m{};
  m[0] = pick(rng_);
  do m[1] = pick(rng_); while (m[1] == m[0]);
  do m[2] = pick(rng_); while (m[2] == m[0] || m[2] == m[1]);
  for (auto& k : m) k = pool[k];
  return m;
}

std::optional<RigidTransform> HypothesisStream::triplet_transform(const std::array<std::size_t, 3>& m) const {
  if (config_.distance_check) {
    const double r = config_.distance_check_ratio;
    if (!legs_compatible(c_[m[0]], c_[m[1]], r) || !legs_compatible(c_[m[1]], c_[m[2]], r) ||
        !legs_compatible(c_[m[0]], c_[m[2]], r))
      return std::nullopt;
  }
  const std::array<Vec3, 3> src = {c_[m[0]].p, c_[m[1]].p, c_[m[2]].p};
  const std::array<Vec3, 3> dst = {c_[m[0]].q, c_[m[1]].q, c_[m[2]].q};
  try {
    return geom::kabsch(src, dst);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerateGeometry) throw;
    return std::nullopt;
  }
}

std::optional<Hypothesis> HypothesisStream::next() {
  Hypothesis h;
  h.index = drawn_;
  if (config_.mode == Mode::kOse) {
    if (drawn_ == order_.size()) return std::nullopt;
    const Correspondence& ci = c_[order_[drawn_]];
    h.members[0] = order_[drawn_];
    h.member_count = 1;
    RigidTransform t;
    t.rotation = ci.refined_rotation ? *ci.refined_rotation : icosa::group().rotation(ci.coarse_rotation);
    t.translation = ci.q - t.rotation * ci.p;
    h.transform = t;
  } else {
    if (config_.mode == Mode::kCrv && !fell_back_) {
      std::uniform_int_distribution<std::uint64_t> pick(0, bucket_cumulative_.back() - 1);
      const std::uint64_t u = pick(rng_);
      const auto b = static_cast<std::size_t>(
          std::upper_bound(bucket_cumulative_.begin(), bucket_cumulative_.end(), u) - bucket_cumulative_.begin());
      h.members = uniform_triplet(buckets_[b]);
    } else {
      h.members = uniform_triplet(all_);
    }
    h.member_count = 3;
    h.transform = triplet_transform(h.members);
  }
  ++drawn_;
  return h;
}

std::vector<std::size_t> count_inliers(const RigidTransform& t, std::span<const Correspondence> c, double tau) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < c.size(); ++i)
    if ((t(c[i].p) - c[i].q).norm() <= tau) out.push_back(i);
  return out;
}

RegistrationResult run_ransac(std::span<const Correspondence> c, const RansacConfig& config) {
  HypothesisStream stream(c, config);
  RegistrationResult result;
  result.seed = config.seed;
  result.fell_back = stream.fell_back();
  if (result.fell_back) {
    result.warnings.push_back("crv: every coarse-rotation bucket has fewer than 3 members; sampling uniformly");
    warn(result.warnings.back());
  }

  std::vector<Hypothesis> hyps;
  while (hyps.size() < config.max_iterations) {
    auto h = stream.next();
    if (!h) break;
    hyps.push_back(std::move(*h));
  }
  result.hypotheses_evaluated = hyps.size();

  // -1 marks draws without a transform.
  std::vector<long> score(hyps.size(), -1);
  const double tau = config.inlier_threshold;
  parallel_for(hyps.size(), [&](std::size_t k) {
    if (!hyps[k].transform) return;
    long n = 0;
    for (const auto& ci : c) n += ((*hyps[k].transform)(ci.p) - ci.q).norm() <= tau;
    score[k] = n;
  });
  long best = -1;
  for (std::size_t k = 0; k < hyps.size(); ++k)
    if (score[k] > best) {
      best = score[k];
      result.best_hypothesis = k;
    }
  if (!result.best_hypothesis) {
    result.inlier_indices = count_inliers(result.transform, c, tau);
    return result;
  }

  result.best_hypothesis_inliers = static_cast<std::size_t>(best);
  result.transform = *hyps[*result.best_hypothesis].transform;
  if (config.refit && best >= 3) {
    const auto inliers = count_inliers(result.transform, c, tau);
    std::vector<Vec3> src, dst;
    for (auto i : inliers) {
      src.push_back(c[i].p);
      dst.push_back(c[i].q);
    }
    try {
      result.transform = geom::kabsch(src, dst);
      result.refitted = true;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDegenerateGeometry) throw;
    }
  }
  result.inlier_indices = count_inliers(result.transform, c, tau);
  return result;
}

}  // namespace icoreg::ransac
