#include "icoreg/rotation.hpp"

#include <cmath>

namespace icoreg {

double rotation_angle(const Mat3& r) {
  const Vec3 skew(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double s = 0.5 * skew.norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

double rotation_distance(const Mat3& a, const Mat3& b) {
  return rotation_angle(a * b.transpose());
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  const double dev = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  return dev <= tol && r.determinant() > 0.0;
}

Quat4 to_quaternion(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  return Quat4(q.w(), q.x(), q.y(), q.z());
}

Mat3 from_quaternion(const Quat4& q) {
  Eigen::Quaterniond e(q[0], q[1], q[2], q[3]);
  e.normalize();
  return e.toRotationMatrix();
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat4 q;
  do {
    q = Quat4(n(rng), n(rng), n(rng), n(rng));
  } while (q.norm() < 1e-9);
  return from_quaternion(q);
}

}  // namespace icoreg
