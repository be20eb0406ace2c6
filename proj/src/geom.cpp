#include "icoreg/geom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "icoreg/error.hpp"

namespace icoreg::geom {

void PointCloud::validate() const {
  for (const Vec3& p : points)
    if (!p.allFinite()) throw Error(ErrorKind::kInvalidArgument, "point cloud has non-finite coordinates");
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  return {rotation * other.rotation, rotation * other.translation + translation};
}

PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back(t(p));
  return out;
}

KdTree make_kdtree(std::span<const Vec3> points) {
  std::vector<double> coords;
  coords.reserve(points.size() * 3);
  for (const Vec3& p : points) coords.insert(coords.end(), {p.x(), p.y(), p.z()});
  return KdTree(std::move(coords), 3);
}

KdTree make_kdtree(const PointCloud& cloud) { return make_kdtree(std::span<const Vec3>(cloud.points)); }

namespace {

// Rank check on the centered point set: the second singular value must not
// vanish relative to the first.
bool spans_plane(std::span<const Vec3> pts, const Vec3& centroid) {
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const Vec3& p : pts) scatter += (p - centroid) * (p - centroid).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter, Eigen::EigenvaluesOnly);
  const Vec3 ev = es.eigenvalues();  // ascending
  return ev[2] > 0.0 && ev[1] > 1e-12 * ev[2];
}

}  // namespace

RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size())
    throw Error(ErrorKind::kDimensionMismatch, "kabsch needs equally many source and target points");
  if (src.size() < 3) throw Error(ErrorKind::kDegenerateGeometry, "kabsch needs at least three pairs");

  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  if (!spans_plane(src, cs) || !spans_plane(dst, cd))
    throw Error(ErrorKind::kDegenerateGeometry, "kabsch input is collinear or coincident");

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  RigidTransform out;
  out.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  out.translation = cd - out.rotation * cs;
  return out;
}

namespace {

struct Association {
  std::vector<std::size_t> target;  // nearest dst index per src point
  std::vector<double> sq_dist;
  double truncated_cost = 0.0;      // sum of min(d², τ²)
};

Association associate(const PointCloud& src, const KdTree& tree, const RigidTransform& t, double tau2) {
  Association a;
  a.target.resize(src.size());
  a.sq_dist.resize(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 p = t(src.points[i]);
    const auto [j, d2] = tree.nearest(std::span<const double>(p.data(), 3));
    a.target[i] = j;
    a.sq_dist[i] = d2;
    a.truncated_cost += std::min(d2, tau2);
  }
  return a;
}

}  // namespace

IcpResult icp(const PointCloud& src, const PointCloud& dst, const RigidTransform& init,
              const IcpOptions& options) {
  if (src.empty() || dst.empty()) throw Error(ErrorKind::kInvalidArgument, "icp on an empty cloud");
  const KdTree tree = make_kdtree(dst);
  const double tau = options.max_correspondence_distance;
  const double tau2 = std::isinf(tau) ? std::numeric_limits<double>::infinity() : tau * tau;
  const double n = static_cast<double>(src.size());

  IcpResult result;
  result.transform = init;
  Association assoc = associate(src, tree, init, tau2);
  result.rmse_trace.push_back(std::sqrt(assoc.truncated_cost / n));

  std::vector<Vec3> from, to;
  for (int it = 0; it < options.max_iterations; ++it) {
    from.clear();
    to.clear();
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (assoc.sq_dist[i] <= tau2) {
        from.push_back(src.points[i]);
        to.push_back(dst.points[assoc.target[i]]);
      }
    }
    RigidTransform next;
    try {
      next = kabsch(from, to);
    } catch (const Error&) {
      break;  // too few or degenerate inliers
    }
    Association next_assoc = associate(src, tree, next, tau2);
    const double prev_rmse = result.rmse_trace.back();
    const double next_rmse = std::sqrt(next_assoc.truncated_cost / n);
    if (!(next_rmse < prev_rmse)) break;
    result.transform = next;
    assoc = std::move(next_assoc);
    result.rmse_trace.push_back(next_rmse);
    result.iterations = it + 1;
    if (prev_rmse - next_rmse < options.convergence_tolerance) break;
  }

  double sum = 0.0;
  std::size_t count = 0;
  for (double d2 : assoc.sq_dist)
    if (d2 <= tau2) {
      sum += d2;
      ++count;
    }
  result.inlier_count = count;
  result.inlier_rmse = count > 0 ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
  return result;
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0)) throw Error(ErrorKind::kInvalidArgument, "voxel size must be positive");
  struct Acc {
    Vec3 sum = Vec3::Zero();
    std::size_t n = 0;
  };
  std::map<std::array<std::int64_t, 3>, Acc> cells;
  for (const Vec3& p : cloud.points) {
    const std::array<std::int64_t, 3> key = {static_cast<std::int64_t>(std::floor(p.x() / voxel)),
                                             static_cast<std::int64_t>(std::floor(p.y() / voxel)),
                                             static_cast<std::int64_t>(std::floor(p.z() / voxel))};
    Acc& a = cells[key];
    a.sum += p;
    ++a.n;
  }
  PointCloud out;
  out.points.reserve(cells.size());
  for (const auto& [key, acc] : cells) out.points.push_back(acc.sum / static_cast<double>(acc.n));
  return out;
}

double neighborhood_min_eigenvalue(const PointCloud& cloud, const KdTree& tree, std::size_t center,
                                   double radius) {
  const Vec3& c = cloud.points[center];
  const auto nbrs = tree.radius_search(std::span<const double>(c.data(), 3), radius);
  if (nbrs.size() < 3) return -1.0;
  Vec3 mean = Vec3::Zero();
  for (std::size_t j : nbrs) mean += (cloud.points[j] - c) / radius;
  mean /= static_cast<double>(nbrs.size());
  Mat3 cov = Mat3::Zero();
  for (std::size_t j : nbrs) {
    const Vec3 x = (cloud.points[j] - c) / radius - mean;
    cov += x * x.transpose();
  }
  cov /= static_cast<double>(nbrs.size());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov, Eigen::EigenvaluesOnly);
  return std::max(0.0, es.eigenvalues()[0]);
}

std::vector<std::size_t> planarity_filter(const PointCloud& cloud, const KdTree& tree,
                                          std::span<const std::size_t> keypoints, double radius,
                                          double min_eigenvalue) {
  if (!(radius > 0.0)) throw Error(ErrorKind::kInvalidArgument, "planarity radius must be positive");
  std::vector<std::size_t> kept;
  for (std::size_t k : keypoints) {
    if (k >= cloud.size()) throw Error(ErrorKind::kInvalidArgument, "keypoint index out of range");
    const double ev = neighborhood_min_eigenvalue(cloud, tree, k, radius);
    if (ev >= 0.0 && ev >= min_eigenvalue) kept.push_back(k);
  }
  return kept;
}

std::vector<std::size_t> planarity_filter(const PointCloud& cloud, std::span<const std::size_t> keypoints,
                                          double radius, double min_eigenvalue) {
  return planarity_filter(cloud, make_kdtree(cloud), keypoints, radius, min_eigenvalue);
}

RigidTransform random_transform(std::uint64_t seed, double max_angle, double max_translation) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec3 axis;
  do {
    axis = Vec3(n(rng), n(rng), n(rng));
  } while (axis.norm() < 1e-9);
  const double angle = max_angle * u(rng);
  RigidTransform t;
  t.rotation = axis_angle(axis, angle);
  for (int i = 0; i < 3; ++i) t.translation[i] = max_translation * (2.0 * u(rng) - 1.0);
  return t;
}

}  // namespace icoreg::geom
