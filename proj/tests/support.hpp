#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Core>

#include "icoreg/backbone.hpp"

namespace icoreg::testing {

// Lopsided random point set inside a ball of the given radius: generic
// enough that no group rotation maps it onto itself.
inline backbone::Patch random_patch(std::uint64_t seed, std::size_t n = 150, double radius = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  backbone::Patch p;
  p.radius = radius;
  while (p.neighbors.size() < n) {
    Vec3 v(u(rng), u(rng), u(rng));
    if (v.norm() >= 1.0) continue;
    v.z() *= 0.3 + 0.7 * std::abs(v.x());
    v.y() += 0.2 * v.x() * v.x();
    if (v.norm() < 1.0) p.neighbors.push_back(radius * v);
  }
  return p;
}

// n points uniform in a ball: generic, with no preferred axis.
inline backbone::Patch uniform_ball_patch(std::uint64_t seed, std::size_t n = 150, double radius = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  backbone::Patch p;
  p.radius = radius;
  while (p.neighbors.size() < n) {
    const Vec3 v(u(rng), u(rng), u(rng));
    if (v.norm() < 1.0) p.neighbors.push_back(radius * v);
  }
  return p;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// |a − b| relative to the larger magnitude, with a floor for near-zero pairs.
inline double relative_error(double a, double b, double floor = 1e-10) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace icoreg::testing
