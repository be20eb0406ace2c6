#include "icoreg/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "icoreg/error.hpp"

namespace icoreg::backbone {

namespace {

// Linear weights between neighboring bin centers at (i + 0.5), clamped to
// the first/last center.
struct Split {
  int lo, hi;
  double w_hi;
};

Split clamped_split(double coord, int bins) {
  const double u = coord * bins - 0.5;
  if (u <= 0.0) return {0, 0, 0.0};
  if (u >= bins - 1) return {bins - 1, bins - 1, 0.0};
  const int lo = static_cast<int>(std::floor(u));
  return {lo, lo + 1, u - lo};
}

Split wrapped_split(double coord, int bins) {
  double u = coord * bins - 0.5;
  const double f = std::floor(u);
  int lo = static_cast<int>(f) % bins;
  if (lo < 0) lo += bins;
  return {lo, (lo + 1) % bins, u - f};
}

}  // namespace

Patch extract_patch(const geom::PointCloud& cloud, std::size_t center_index, double radius) {
  if (center_index >= cloud.size()) throw Error(ErrorKind::kInvalidArgument, "patch center out of range");
  Patch patch;
  patch.center = cloud.points[center_index];
  patch.radius = radius;
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (i == center_index) continue;
    const Vec3 d = cloud.points[i] - patch.center;
    if (d.squaredNorm() < r2) patch.neighbors.push_back(d);
  }
  if (patch.neighbors.empty()) throw Error(ErrorKind::kEmptyPatch, "no neighbors within patch radius");
  return patch;
}

Patch extract_patch(const geom::PointCloud& cloud, const KdTree& tree, std::size_t center_index,
                    double radius) {
  if (center_index >= cloud.size()) throw Error(ErrorKind::kInvalidArgument, "patch center out of range");
  Patch patch;
  patch.center = cloud.points[center_index];
  patch.radius = radius;
  for (std::size_t i : tree.radius_search(std::span<const double>(patch.center.data(), 3), radius)) {
    if (i == center_index) continue;
    patch.neighbors.push_back(cloud.points[i] - patch.center);
  }
  if (patch.neighbors.empty()) throw Error(ErrorKind::kEmptyPatch, "no neighbors within patch radius");
  return patch;
}

Patch rotate_patch(const Patch& patch, const Mat3& rotation) {
  Patch out = patch;
  for (Vec3& p : out.neighbors) p = rotation * p;
  return out;
}

void BackboneSpec::validate() const {
  if (shells < 1 || azimuth_bins < 1 || elevation_bins < 1)
    throw Error(ErrorKind::kInvalidArgument, "histogram bin counts must be >= 1");
}

void Backbone::extract_rotated(std::span<const Vec3> neighbors, double radius, std::span<const Mat3> rotations,
                               double* out) const {
  std::vector<Vec3> rotated(neighbors.size());
  for (std::size_t k = 0; k < rotations.size(); ++k) {
    for (std::size_t i = 0; i < neighbors.size(); ++i) rotated[i] = rotations[k] * neighbors[i];
    extract(rotated, radius, out + k * output_dim());
  }
}

Eigen::VectorXd Backbone::operator()(const Patch& patch) const {
  Eigen::VectorXd out(output_dim());
  extract(patch.neighbors, patch.radius, out.data());
  return out;
}

HistogramBackbone::HistogramBackbone(BackboneSpec spec) : spec_(spec) { spec_.validate(); }

namespace {

// Fixed-point accumulation makes the sum independent of point order.
constexpr double kScale = 1099511627776.0;  // 2^40

std::int64_t fixed(double w) { return static_cast<std::int64_t>(kScale * w + 0.5); }

// Branch-free atan2 with absolute error below 1.2e-8 rad: a degree-17 odd
// polynomial on the first octant, reflected into the others. Returns 0 at
// the origin.
double octant_atan2(double y, double x) {
  const double ax = std::abs(x), ay = std::abs(y);
  const double hi = std::max(ax, ay);
  if (hi == 0.0) return 0.0;
  const double r = std::min(ax, ay) / hi;
  const double t = r * r;
  double p = 0.0028340642387898723;
  p = p * t - 0.01600503026806472;
  p = p * t + 0.042587607090054547;
  p = p * t - 0.074954454119965222;
  p = p * t + 0.10636754083492901;
  p = p * t - 0.14202570507922624;
  p = p * t + 0.19992483578004847;
  p = p * t - 0.33333066780664161;
  p = p * t + 0.99999998424263203;
  double a = r * p;
  a = ay > ax ? 0.5 * std::numbers::pi - a : a;
  a = x < 0.0 ? std::numbers::pi - a : a;
  return std::copysign(a, y);
}

// Adds one point with radial split `rs` and patch-frame direction `p`.
void add_point(std::int64_t* acc, const Split& rs, const Vec3& p, int A, int E) {
  const double rxy = std::sqrt(p.x() * p.x() + p.y() * p.y());
  if (rxy == 0.0 && p.z() == 0.0) {
    // Direction undefined: spread over every angular bin of the shell.
    const std::int64_t w = fixed(1.0 / (A * E));
    for (int e = 0; e < E; ++e)
      for (int a = 0; a < A; ++a) acc[(rs.lo * E + e) * A + a] += w;
    return;
  }
  constexpr double inv_pi = 1.0 / std::numbers::pi;
  const Split es = clamped_split((octant_atan2(p.z(), rxy) + 0.5 * std::numbers::pi) * inv_pi, E);
  const Split as = wrapped_split((octant_atan2(p.y(), p.x()) + std::numbers::pi) * 0.5 * inv_pi, A);
  const int shell[2] = {rs.lo, rs.hi};
  const double shell_w[2] = {1.0 - rs.w_hi, rs.w_hi};
  const int elev[2] = {es.lo, es.hi};
  const double elev_w[2] = {1.0 - es.w_hi, es.w_hi};
  const int azim[2] = {as.lo, as.hi};
  const double azim_w[2] = {1.0 - as.w_hi, as.w_hi};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        acc[(shell[i] * E + elev[j]) * A + azim[k]] += fixed(shell_w[i] * elev_w[j] * azim_w[k]);
}

void check_patch(std::span<const Vec3> neighbors, double radius) {
  if (neighbors.empty()) throw Error(ErrorKind::kEmptyPatch, "histogram of an empty patch");
  if (!(radius > 0.0)) throw Error(ErrorKind::kInvalidArgument, "patch radius must be positive");
}

}  // namespace

Eigen::VectorXd HistogramBackbone::accumulate(std::span<const Vec3> neighbors, double radius) const {
  check_patch(neighbors, radius);
  const int S = spec_.shells;
  std::vector<std::int64_t> acc(spec_.output_dim(), 0);
  for (const Vec3& p : neighbors)
    add_point(acc.data(), clamped_split(std::min(p.norm() / radius, 1.0), S), p, spec_.azimuth_bins,
              spec_.elevation_bins);
  Eigen::VectorXd hist(spec_.output_dim());
  for (int b = 0; b < hist.size(); ++b) hist[b] = static_cast<double>(acc[b]) / kScale;
  return hist;
}

void HistogramBackbone::extract_rotated(std::span<const Vec3> neighbors, double radius,
                                        std::span<const Mat3> rotations, double* out) const {
  check_patch(neighbors, radius);
  const int dim = spec_.output_dim();
  std::vector<Split> radial(neighbors.size());
  for (std::size_t i = 0; i < neighbors.size(); ++i)
    radial[i] = clamped_split(std::min(neighbors[i].norm() / radius, 1.0), spec_.shells);
  std::vector<std::int64_t> acc(dim);
  for (std::size_t k = 0; k < rotations.size(); ++k) {
    std::fill(acc.begin(), acc.end(), 0);
    for (std::size_t i = 0; i < neighbors.size(); ++i)
      add_point(acc.data(), radial[i], rotations[k] * neighbors[i], spec_.azimuth_bins, spec_.elevation_bins);
    Eigen::Map<Eigen::VectorXd> row(out + k * dim, dim);
    for (int b = 0; b < dim; ++b) row[b] = static_cast<double>(acc[b]) / kScale;
    row /= row.norm();
  }
}

void HistogramBackbone::extract(std::span<const Vec3> neighbors, double radius, double* out) const {
  const Eigen::VectorXd hist = accumulate(neighbors, radius);
  const double norm = hist.norm();
  Eigen::Map<Eigen::VectorXd>(out, hist.size()) = hist / norm;
}

Eigen::VectorXd phi_histogram(const Patch& patch, const BackboneSpec& spec) {
  return HistogramBackbone(spec)(patch);
}

}  // namespace icoreg::backbone
