#pragma once

#include <random>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace icoreg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
/// Quaternion stored as (w, x, y, z).
using Quat4 = Eigen::Vector4d;

/// Geodesic angle of a rotation matrix in [0, pi]. Uses atan2 of the
/// skew and trace parts so small and near-pi angles stay accurate.
double rotation_angle(const Mat3& r);

/// Angle of a·bᵀ, i.e. the geodesic distance between two rotations.
double rotation_distance(const Mat3& a, const Mat3& b);

Mat3 axis_angle(const Vec3& axis, double angle);

/// True when ‖RᵀR − I‖_max ≤ tol and det(R) > 0.
bool is_rotation(const Mat3& r, double tol);

Quat4 to_quaternion(const Mat3& r);
Mat3 from_quaternion(const Quat4& q);  // q need not be unit

/// Haar-uniform rotation.
Mat3 random_rotation(std::mt19937_64& rng);

}  // namespace icoreg
