#pragma once

#include <array>
#include <string>
#include <vector>

#include "pickstow/geometry.hpp"

namespace pickstow {

/// One Denavit-Hartenberg row (standard/distal convention).
struct DHRow {
  double a = 0.0;             ///< link length (m)
  double d = 0.0;             ///< link offset (m)
  double alpha = 0.0;         ///< link twist (rad)
  double theta_offset = 0.0;  ///< constant added to the joint variable (rad)
};

constexpr int kNumJoints = 6;

/// Serial 6R manipulator: DH table, joint limits and per-link capsule radii.
struct RobotModel {
  std::array<DHRow, kNumJoints> dh{};
  std::array<std::pair<double, double>, kNumJoints> joint_limits{};  ///< (min, max) rad
  std::array<double, kNumJoints> link_radii{};                       ///< capsule radius (m)
};

/// Joint-space configuration of the arm.
struct JointConfig {
  Vector6d angles = Vector6d::Zero();

  JointConfig() = default;
  explicit JointConfig(const Vector6d& q) : angles(q) {}
  JointConfig(double q1, double q2, double q3, double q4, double q5, double q6) {
    angles << q1, q2, q3, q4, q5, q6;
  }

  double operator[](int i) const { return angles[i]; }
  double& operator[](int i) { return angles[i]; }
};

bool within_limits(const JointConfig& q, const RobotModel& model);

/// UR5 DH table with default limits (+-2*pi) and 5 cm link capsules.
RobotModel ur5_model();

/// Transform of a single DH row at joint angle q: Rz(q + offset) Tz(d) Tx(a) Rx(alpha).
RigidTransform dh_transform(const DHRow& row, double q);

/// Base-to-end-effector pose.
RigidTransform forward_kinematics(const RobotModel& model, const JointConfig& q);

/// Cumulative frames: [identity, after joint 1, ..., after joint 6].
/// The last element equals forward_kinematics(model, q).
std::vector<RigidTransform> link_frames(const RobotModel& model, const JointConfig& q);

/// Geometric Jacobian (6x6): rows 0-2 linear velocity, rows 3-5 angular.
/// Column i is (z_{i-1} x (p_e - p_{i-1}); z_{i-1}) for revolute joints.
Matrix6d geometric_jacobian(const RobotModel& model, const JointConfig& q);

/// JSON with keys "dh", "joint_limits", "link_radii".
std::string robot_model_to_json(const RobotModel& model);
RobotModel robot_model_from_json(const std::string& text);

}  // namespace pickstow
