#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace pickstow {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Rigid pose: rotation + translation, composable like a 4x4 homogeneous matrix.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  RigidTransform operator*(const RigidTransform& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }

  RigidTransform inverse() const {
    Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  static RigidTransform from_matrix(const Eigen::Matrix4d& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }

  /// Orthonormal with det +1 within tol.
  bool is_valid_rotation(double tol = 1e-9) const {
    Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

/// Axis-angle vector (angle * unit axis) of a rotation matrix.
Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r);

/// Rodrigues: axis-angle vector back to a rotation matrix.
Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& w);

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

/// Axis-aligned box in 3D.
struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }

  Eigen::Vector3d center() const { return 0.5 * (min + max); }
  Eigen::Vector3d extents() const { return max - min; }

  Aabb inflated(double margin) const {
    return {min.array() - margin, max.array() + margin};
  }
};

/// Distance from a point to an Aabb (0 inside).
double point_aabb_distance(const Eigen::Vector3d& p, const Aabb& box);

/// Exact minimum distance between a segment [a,b] and an Aabb.
/// Piecewise-quadratic minimization over the clamp-pattern breakpoints; no sampling.
double segment_aabb_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Aabb& box);

/// Axis-aligned rectangle in the plane.
struct Rect2d {
  Eigen::Vector2d min = Eigen::Vector2d::Zero();
  Eigen::Vector2d max = Eigen::Vector2d::Zero();

  bool contains(const Eigen::Vector2d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  double width() const { return max.x() - min.x(); }
  double height() const { return max.y() - min.y(); }
};

}  // namespace pickstow
