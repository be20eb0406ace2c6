#include "icoreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>

#include "icoreg/error.hpp"

namespace icoreg::pipeline {

SyntheticCorrespondences synth_correspondences(const CorrespondenceSynthConfig& cfg) {
  if (cfg.count == 0) throw Error(ErrorKind::kInvalidArgument, "correspondence count must be positive");
  if (!(cfg.inlier_ratio >= 0.0 && cfg.inlier_ratio <= 1.0))
    throw Error(ErrorKind::kInvalidArgument, "inlier ratio must lie in [0, 1]");
  if (!(cfg.coarse_accuracy >= 0.0 && cfg.coarse_accuracy <= 1.0))
    throw Error(ErrorKind::kInvalidArgument, "coarse accuracy must lie in [0, 1]");
  if (!(cfg.extent > 0.0) || !(cfg.noise_sigma >= 0.0))
    throw Error(ErrorKind::kInvalidArgument, "extent must be positive and noise non-negative");

  const auto& group = icosa::group();
  std::mt19937_64 rng(cfg.seed);
  SyntheticCorrespondences out;
  out.truth = geom::random_transform(rng(), cfg.max_angle, cfg.max_translation);
  std::uniform_real_distribution<double> u(-cfg.extent, cfg.extent), unit(0.0, 1.0);
  std::uniform_int_distribution<int> element(0, icosa::kGroupOrder - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto point = [&] { return Vec3(u(rng), u(rng), u(rng)); };
  const icosa::GroupElement truth_element = group.quantize(out.truth.rotation).first;

  const auto inliers = static_cast<std::size_t>(std::lround(cfg.inlier_ratio * static_cast<double>(cfg.count)));
  out.is_inlier.assign(cfg.count, false);
  std::fill(out.is_inlier.begin(), out.is_inlier.begin() + static_cast<std::ptrdiff_t>(inliers), true);
  std::shuffle(out.is_inlier.begin(), out.is_inlier.end(), rng);

  out.correspondences.resize(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    matchrot::Correspondence& c = out.correspondences[i];
    c.p_index = c.q_index = i;
    c.p = point();
    if (out.is_inlier[i]) {
      c.q = out.truth(c.p) + cfg.noise_sigma * Vec3(gauss(rng), gauss(rng), gauss(rng));
      c.coarse_rotation = unit(rng) < cfg.coarse_accuracy ? truth_element : icosa::GroupElement(element(rng));
      if (cfg.refined_noise >= 0.0) {
        const Vec3 axis = Vec3(gauss(rng), gauss(rng), gauss(rng)).normalized();
        c.refined_rotation = axis_angle(axis, cfg.refined_noise * unit(rng)) * out.truth.rotation;
      }
    } else {
      c.q = out.truth(point());
      c.coarse_rotation = icosa::GroupElement(element(rng));
      if (cfg.refined_noise >= 0.0) c.refined_rotation = random_rotation(rng);
    }
  }
  return out;
}

namespace {

struct Box {
  Vec3 center;  // base center on the ground
  Vec3 half;
  double yaw;
};

struct Sphere {
  Vec3 center;
  double radius;
};

struct Scene {
  bool objects = true;
  double ridge_x, ridge_y, ridge_angle, wave_phase;
  std::vector<Box> boxes;
  std::vector<Sphere> spheres;

  double ground(double x, double y) const {
    const double across = (x - ridge_x) * std::cos(ridge_angle) + (y - ridge_y) * std::sin(ridge_angle);
    return 0.06 * std::sin(2.3 * x + wave_phase) * std::cos(1.7 * y) + 0.04 * std::sin(5.1 * y - 1.3 * x) +
           0.18 * std::exp(-across * across / 0.015);
  }
};

Scene make_scene(const std::string& shape, std::mt19937_64& rng) {
  if (shape != "blocks" && shape != "terrain") throw Error(ErrorKind::kInvalidArgument, "unknown scene shape '" + shape + "'");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scene s;
  s.objects = shape == "blocks";
  s.ridge_x = 0.6 * u(rng) - 0.3;
  s.ridge_y = 0.6 * u(rng) - 0.3;
  s.ridge_angle = std::numbers::pi * u(rng);
  s.wave_phase = 2.0 * std::numbers::pi * u(rng);
  if (!s.objects) return s;
  for (int i = 0; i < 5; ++i)
    s.boxes.push_back({Vec3(1.6 * u(rng) - 0.8, 1.6 * u(rng) - 0.8, 0.0),
                       Vec3(0.06 + 0.14 * u(rng), 0.06 + 0.14 * u(rng), 0.08 + 0.2 * u(rng)),
                       std::numbers::pi * u(rng)});
  for (int i = 0; i < 4; ++i) {
    const double r = 0.08 + 0.14 * u(rng);
    s.spheres.push_back({Vec3(1.6 * u(rng) - 0.8, 1.6 * u(rng) - 0.8, 0.4 * r), r});
  }
  return s;
}

// One surface sample, or nothing when it is hidden below the ground.
std::optional<Vec3> sample_surface(const Scene& s, std::mt19937_64& rng, const std::vector<double>& cumulative) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double pick = u(rng) * cumulative.back();
  const auto k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
                                          cumulative.begin());
  if (k == 0) {
    const double x = 2 * u(rng) - 1, y = 2 * u(rng) - 1;
    return Vec3(x, y, s.ground(x, y));
  }
  if (k <= s.boxes.size()) {
    const Box& b = s.boxes[k - 1];
    // Top and four sides, by area.
    const double top = 4 * b.half.x() * b.half.y(), side_x = 4 * b.half.y() * b.half.z(),
                 side_y = 4 * b.half.x() * b.half.z();
    const double f = u(rng) * (top + 2 * side_x + 2 * side_y);
    const double a = 2 * u(rng) - 1, c = 2 * u(rng) - 1;
    Vec3 local;
    if (f < top) local = Vec3(a * b.half.x(), c * b.half.y(), 2 * b.half.z());
    else if (f < top + 2 * side_x) local = Vec3(f < top + side_x ? b.half.x() : -b.half.x(), a * b.half.y(), (c + 1) * b.half.z());
    else local = Vec3(a * b.half.x(), f < top + 2 * side_x + side_y ? b.half.y() : -b.half.y(), (c + 1) * b.half.z());
    const Vec3 p = b.center + axis_angle(Vec3::UnitZ(), b.yaw) * local;
    if (p.z() < s.ground(p.x(), p.y())) return std::nullopt;
    return p;
  }
  const Sphere& sp = s.spheres[k - 1 - s.boxes.size()];
  std::normal_distribution<double> g(0.0, 1.0);
  const Vec3 p = sp.center + sp.radius * Vec3(g(rng), g(rng), g(rng)).normalized();
  if (p.z() < s.ground(p.x(), p.y())) return std::nullopt;
  return p;
}

std::size_t fraction_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

void drop_points(std::vector<Vec3>& pts, double fraction, std::mt19937_64& rng) {
  const std::size_t remove = fraction_count(fraction, pts.size());
  if (remove == 0) return;
  std::vector<std::size_t> idx(pts.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<bool> gone(pts.size(), false);
  for (std::size_t i = 0; i < remove; ++i) gone[idx[i]] = true;
  std::size_t w = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (!gone[i]) pts[w++] = pts[i];
  pts.resize(w);
}

void degrade_view(geom::PointCloud& view, const SynthConfig& cfg, std::mt19937_64& rng) {
  drop_points(view.points, cfg.dropout_fraction, rng);
  std::normal_distribution<double> g(0.0, 1.0);
  if (cfg.noise_sigma > 0.0)
    for (auto& p : view.points) p += cfg.noise_sigma * Vec3(g(rng), g(rng), g(rng));
  const std::size_t outliers = fraction_count(cfg.outlier_fraction, view.size());
  if (outliers == 0 || view.empty()) return;
  Vec3 lo = view.points.front(), hi = lo;
  for (const auto& p : view.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < outliers; ++i)
    view.points.push_back(lo + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(hi - lo));
}

}  // namespace

std::vector<std::string> scene_shapes() { return {"blocks", "terrain"}; }

geom::PointCloud sample_scene(const std::string& shape, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Scene s = make_scene(shape, rng);
  // Ground area is taken as its 2×2 footprint.
  std::vector<double> cumulative = {4.0};
  for (const auto& b : s.boxes)
    cumulative.push_back(cumulative.back() + 4 * b.half.x() * b.half.y() +
                         8 * b.half.z() * (b.half.x() + b.half.y()));
  for (const auto& sp : s.spheres)
    cumulative.push_back(cumulative.back() + 4 * std::numbers::pi * sp.radius * sp.radius);
  geom::PointCloud cloud;
  cloud.points.reserve(count);
  while (cloud.size() < count)
    if (auto p = sample_surface(s, rng, cumulative)) cloud.points.push_back(*p);
  return cloud;
}

void SynthConfig::validate() const {
  if (point_count < kMinPointCount)
    throw Error(ErrorKind::kInvalidArgument, "point_count must be at least " + std::to_string(kMinPointCount));
  if (!(overlap_fraction > 0.0 && overlap_fraction <= 1.0))
    throw Error(ErrorKind::kInvalidArgument, "overlap_fraction must lie in (0, 1]");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw Error(ErrorKind::kInvalidArgument, "noise_sigma must be non-negative");
  if (!(dropout_fraction >= 0.0 && dropout_fraction < 1.0))
    throw Error(ErrorKind::kInvalidArgument, "dropout_fraction must lie in [0, 1)");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0))
    throw Error(ErrorKind::kInvalidArgument, "outlier_fraction must lie in [0, 1)");
  if (!(max_angle >= 0.0) || !(max_translation >= 0.0))
    throw Error(ErrorKind::kInvalidArgument, "transform magnitudes must be non-negative");
}

SynthPair synth_pair(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const geom::PointCloud scene = sample_scene(cfg.base_shape, cfg.point_count, rng());
  const double heading = std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(rng);
  const Vec3 dir(std::cos(heading), std::sin(heading), 0.0);
  std::vector<std::size_t> order(scene.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scene.points[a].dot(dir) < scene.points[b].dot(dir); });

  const auto n = static_cast<double>(scene.size());
  const auto view = static_cast<std::size_t>(std::llround(n / (2.0 - cfg.overlap_fraction)));
  if (view < 3 || view > scene.size())
    throw Error(ErrorKind::kInvalidArgument, "overlap request leaves views too small");
  SynthPair out;
  out.truth = geom::random_transform(rng(), cfg.max_angle, cfg.max_translation);
  for (std::size_t i = 0; i < view; ++i) out.p.points.push_back(scene.points[order[i]]);
  for (std::size_t i = scene.size() - view; i < scene.size(); ++i)
    out.q.points.push_back(out.truth(scene.points[order[i]]));
  std::mt19937_64 rng_p(rng()), rng_q(rng());
  degrade_view(out.p, cfg, rng_p);
  degrade_view(out.q, cfg, rng_q);
  return out;
}

backbone::Patch perturb_patch(const backbone::Patch& patch, Perturbation kind, double fraction,
                              std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw Error(ErrorKind::kInvalidArgument, "perturbation fraction must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  backbone::Patch out = patch;
  if (kind == Perturbation::kDropout) {
    drop_points(out.neighbors, fraction, rng);
    return out;
  }
  const auto add = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(patch.neighbors.size())));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t i = 0; i < add;) {
    const Vec3 v(u(rng), u(rng), u(rng));
    if (v.norm() >= 1.0) continue;
    out.neighbors.push_back(patch.radius * v);
    ++i;
  }
  return out;
}

}  // namespace icoreg::pipeline
