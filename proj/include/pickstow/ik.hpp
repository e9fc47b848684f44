#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pickstow/geometry.hpp"
#include "pickstow/kinematics.hpp"

namespace pickstow {

struct RackModel;  // rack_geometry.hpp

/// Thrown when a requested matrix inverse does not exist (Gram matrix singular).
struct SingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IKSettings {
  int max_iterations = 200;
  double position_tolerance = 1e-4;     ///< m
  double orientation_tolerance = 1e-3;  ///< rad
  double step_scale = 0.5;
  double k0 = 1.0;                      ///< null-space gain (>= 0)
  Vector6d kp_gain = Vector6d::Ones();  ///< diagonal of the closed-loop gain K_p
  double lambda = 0.1;                  ///< damping (>= 0)
  bool position_only = false;           ///< 3x6 task Jacobian instead of 6x6
};

struct IKResult {
  JointConfig q;
  bool converged = false;
  int iterations = 0;
  double final_position_error = 0.0;     ///< m
  double final_orientation_error = 0.0;  ///< rad
  std::vector<JointConfig> trajectory;   ///< first element is always the seed
};

/// Task-space error between two poses.
struct PoseError {
  Eigen::Vector3d linear = Eigen::Vector3d::Zero();   ///< m
  Eigen::Vector3d angular = Eigen::Vector3d::Zero();  ///< axis-angle of the rotation error

  Vector6d stacked() const {
    Vector6d e;
    e << linear, angular;
    return e;
  }
};

/// linear = desired.t - current.t; angular = log(desired.R * current.R^T).
PoseError pose_error(const RigidTransform& current, const RigidTransform& desired);

enum class PinvMode {
  LeastSquare,   ///< (J^T J)^-1 J^T
  MinimumNorm,   ///< J^T (J J^T)^-1
  Auto,          ///< SVD with singular values below 1e-8 * sigma_max truncated
};

/// Moore-Penrose pseudoinverse of an m x n matrix.
/// LeastSquare/MinimumNorm throw SingularityError when the respective Gram
/// matrix has condition number above 1e12; Auto is total.
Eigen::MatrixXd pseudoinverse(const Eigen::MatrixXd& j, PinvMode mode);

/// Gradient of w(q) = (1/n) sum_i ((q_i - qbar_i) / (q_iM - q_im))^2,
/// the joint-limit distance cost; component i is (2/n)(q_i - qbar_i)/(q_iM - q_im)^2.
Vector6d joint_limit_gradient(const RobotModel& model, const JointConfig& q);

/// The cost w(q) itself (used to compare solver end states).
double joint_limit_cost(const RobotModel& model, const JointConfig& q);

/// Damped least squares step Jt (J Jt + lambda^2 I)^-1 e, the minimizer of
/// |J dq - e|^2 + lambda^2 |dq|^2. lambda = 0 requires J J^T invertible.
Eigen::VectorXd dls_step(const Eigen::MatrixXd& j, const Eigen::VectorXd& e, double lambda);

/// Jacobian-pseudoinverse iteration dq = step_scale * pinv(J) * e.
IKResult solve_ik_pinv(const RobotModel& model, const RigidTransform& desired,
                       const JointConfig& seed, const IKSettings& settings);

/// Pseudoinverse iteration plus the null-space term (I - pinv(J) J)(-k0 grad w),
/// descending the joint-limit cost without disturbing the task.
IKResult solve_ik_nullspace(const RobotModel& model, const RigidTransform& desired,
                            const JointConfig& seed, const IKSettings& settings);

/// Closed-loop IK: integrates qdot = pinv(J) K_p e with explicit Euler for a
/// static target, until tolerance or the duration runs out.
IKResult solve_ik_clik(const RobotModel& model, const RigidTransform& desired,
                       const JointConfig& seed, const IKSettings& settings,
                       double duration, double dt);

/// Damped-least-squares iteration dq = step_scale * dls_step(J, e, lambda).
IKResult solve_ik_dls(const RobotModel& model, const RigidTransform& desired,
                      const JointConfig& seed, const IKSettings& settings);

struct BinReachReport {
  std::vector<IKResult> results;      ///< one per bin, in bin-index order
  double mean_position_error = 0.0;   ///< over converged solves (m)
  int converged_count = 0;
};

/// One IK solve per bin centre with a fixed approach orientation.
BinReachReport reach_bin_centres(const RobotModel& model, const RackModel& rack,
                                 const Eigen::Matrix3d& approach, const IKSettings& settings);

/// Iteration trace as CSV: iteration, q1..q6, position_error, orientation_error.
std::string ik_trajectory_csv(const RobotModel& model, const RigidTransform& desired,
                              const IKResult& result);

}  // namespace pickstow
