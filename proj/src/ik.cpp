#include "pickstow/ik.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "pickstow/rack_geometry.hpp"
#include "pickstow/rng.hpp"

namespace pickstow {

namespace {

constexpr double kCondLimit = 1e12;
constexpr double kSvdTruncation = 1e-8;

Eigen::MatrixXd inverse_checked(const Eigen::MatrixXd& gram, const char* what) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gram, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double smax = sv(0);
  double smin = sv(sv.size() - 1);
  if (smin <= 0.0 || smax / smin > kCondLimit) {
    throw SingularityError(std::string(what) + ": Gram matrix is numerically singular");
  }
  return svd.solve(Eigen::MatrixXd::Identity(gram.rows(), gram.cols()));
}

}  // namespace

PoseError pose_error(const RigidTransform& current, const RigidTransform& desired) {
  PoseError e;
  e.linear = desired.translation - current.translation;
  e.angular = rotation_log(desired.rotation * current.rotation.transpose());
  return e;
}

Eigen::MatrixXd pseudoinverse(const Eigen::MatrixXd& j, PinvMode mode) {
  switch (mode) {
    case PinvMode::LeastSquare:
      return inverse_checked(j.transpose() * j, "least_square pseudoinverse") * j.transpose();
    case PinvMode::MinimumNorm:
      return j.transpose() * inverse_checked(j * j.transpose(), "minimum_norm pseudoinverse");
    case PinvMode::Auto: {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(j, Eigen::ComputeThinU | Eigen::ComputeThinV);
      Eigen::VectorXd sv = svd.singularValues();
      double cutoff = kSvdTruncation * sv(0);
      Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
      for (int i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
      }
      return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    }
  }
  throw std::logic_error("unreachable");
}

Vector6d joint_limit_gradient(const RobotModel& model, const JointConfig& q) {
  Vector6d g;
  for (int i = 0; i < kNumJoints; ++i) {
    auto [lo, hi] = model.joint_limits[i];
    double mid = 0.5 * (lo + hi);
    double range = hi - lo;
    g[i] = (2.0 / kNumJoints) * (q[i] - mid) / (range * range);
  }
  return g;
}

double joint_limit_cost(const RobotModel& model, const JointConfig& q) {
  double w = 0.0;
  for (int i = 0; i < kNumJoints; ++i) {
    auto [lo, hi] = model.joint_limits[i];
    double mid = 0.5 * (lo + hi);
    double r = (q[i] - mid) / (hi - lo);
    w += r * r;
  }
  return w / kNumJoints;
}

Eigen::VectorXd dls_step(const Eigen::MatrixXd& j, const Eigen::VectorXd& e, double lambda) {
  const long m = j.rows();
  Eigen::MatrixXd a = j * j.transpose();
  if (lambda == 0.0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) {
      throw SingularityError("dls_step: lambda = 0 with singular J J^T");
    }
    return j.transpose() * lu.solve(e);
  }
  a += (lambda * lambda) * Eigen::MatrixXd::Identity(m, m);
  return j.transpose() * a.ldlt().solve(e);
}

namespace {

// Per-iteration update: given task Jacobian, task error and current q, return dq.
using UpdateFn = std::function<Vector6d(const Eigen::MatrixXd&, const Eigen::VectorXd&,
                                        const JointConfig&)>;

IKResult iterate_ik(const RobotModel& model, const RigidTransform& desired,
                    const JointConfig& seed, const IKSettings& settings,
                    const UpdateFn& update) {
  IKResult result;
  result.q = seed;
  result.trajectory.push_back(seed);

  for (int iter = 0;; ++iter) {
    PoseError err = pose_error(forward_kinematics(model, result.q), desired);
    result.final_position_error = err.linear.norm();
    result.final_orientation_error = err.angular.norm();
    bool at_goal = result.final_position_error <= settings.position_tolerance &&
                   (settings.position_only ||
                    result.final_orientation_error <= settings.orientation_tolerance);
    if (at_goal) {
      result.converged = true;
      result.iterations = iter;
      return result;
    }
    if (iter >= settings.max_iterations) {
      result.converged = false;
      result.iterations = iter;
      return result;
    }

    Matrix6d j6 = geometric_jacobian(model, result.q);
    Vector6d dq;
    if (settings.position_only) {
      dq = update(j6.topRows<3>(), err.linear, result.q);
    } else {
      dq = update(j6, err.stacked(), result.q);
    }
    result.q.angles += dq;
    result.trajectory.push_back(result.q);
  }
}

}  // namespace

IKResult solve_ik_pinv(const RobotModel& model, const RigidTransform& desired,
                       const JointConfig& seed, const IKSettings& settings) {
  return iterate_ik(model, desired, seed, settings,
                    [&](const Eigen::MatrixXd& j, const Eigen::VectorXd& e, const JointConfig&) {
                      Eigen::MatrixXd jp = pseudoinverse(j, PinvMode::Auto);
                      return Vector6d(settings.step_scale * (jp * e));
                    });
}

IKResult solve_ik_nullspace(const RobotModel& model, const RigidTransform& desired,
                            const JointConfig& seed, const IKSettings& settings) {
  return iterate_ik(
      model, desired, seed, settings,
      [&](const Eigen::MatrixXd& j, const Eigen::VectorXd& e, const JointConfig& q) {
        Eigen::MatrixXd jp = pseudoinverse(j, PinvMode::Auto);
        Vector6d dq = settings.step_scale * (jp * e);
        if (settings.k0 != 0.0) {
          Matrix6d projector = Matrix6d::Identity() - jp * j;
          Vector6d q0_dot = -settings.k0 * joint_limit_gradient(model, q);
          dq += settings.step_scale * (projector * q0_dot);
        }
        return dq;
      });
}

IKResult solve_ik_clik(const RobotModel& model, const RigidTransform& desired,
                       const JointConfig& seed, const IKSettings& settings,
                       double duration, double dt) {
  if (dt <= 0.0) {
    throw std::invalid_argument("solve_ik_clik: dt must be positive");
  }
  IKResult result;
  result.q = seed;
  result.trajectory.push_back(seed);
  const int max_steps = static_cast<int>(std::llround(duration / dt));

  for (int step = 0;; ++step) {
    PoseError err = pose_error(forward_kinematics(model, result.q), desired);
    result.final_position_error = err.linear.norm();
    result.final_orientation_error = err.angular.norm();
    bool at_goal = result.final_position_error <= settings.position_tolerance &&
                   (settings.position_only ||
                    result.final_orientation_error <= settings.orientation_tolerance);
    if (at_goal) {
      result.converged = true;
      result.iterations = step;
      return result;
    }
    if (step >= max_steps) {
      result.converged = false;
      result.iterations = step;
      return result;
    }

    Matrix6d j6 = geometric_jacobian(model, result.q);
    Vector6d q_dot;
    if (settings.position_only) {
      Eigen::Vector3d ke = settings.kp_gain.head<3>().asDiagonal() * err.linear;
      q_dot = pseudoinverse(j6.topRows<3>(), PinvMode::Auto) * ke;
    } else {
      Vector6d ke = settings.kp_gain.asDiagonal() * err.stacked();
      q_dot = pseudoinverse(j6, PinvMode::Auto) * ke;
    }
    result.q.angles += dt * q_dot;
    result.trajectory.push_back(result.q);
  }
}

IKResult solve_ik_dls(const RobotModel& model, const RigidTransform& desired,
                      const JointConfig& seed, const IKSettings& settings) {
  return iterate_ik(model, desired, seed, settings,
                    [&](const Eigen::MatrixXd& j, const Eigen::VectorXd& e, const JointConfig&) {
                      return Vector6d(settings.step_scale * dls_step(j, e, settings.lambda));
                    });
}

BinReachReport reach_bin_centres(const RobotModel& model, const RackModel& rack,
                                 const Eigen::Matrix3d& approach, const IKSettings& settings) {
  BinReachReport report;
  double error_sum = 0.0;

  // Deterministic seed ladder: zero config plus a few spread configurations.
  std::vector<JointConfig> seeds;
  seeds.emplace_back();
  Rng rng(derive_seed(0x5eedULL, 0xb15ULL));
  std::uniform_real_distribution<double> u(-M_PI, M_PI);
  for (int i = 0; i < 7; ++i) {
    JointConfig s;
    for (int k = 0; k < kNumJoints; ++k) s[k] = u(rng);
    seeds.push_back(s);
  }

  for (const Eigen::Vector3d& centre : rack.bin_centers_3d) {
    RigidTransform desired{approach, centre};
    IKResult best;
    bool have = false;
    for (const JointConfig& seed : seeds) {
      IKResult r = solve_ik_dls(model, desired, seed, settings);
      if (!have || (r.converged && !best.converged) ||
          (r.converged == best.converged &&
           r.final_position_error < best.final_position_error)) {
        best = r;
        have = true;
      }
      if (best.converged) break;
    }
    if (best.converged) {
      ++report.converged_count;
      error_sum += best.final_position_error;
    }
    report.results.push_back(std::move(best));
  }
  report.mean_position_error =
      report.converged_count > 0 ? error_sum / report.converged_count
                                 : std::numeric_limits<double>::quiet_NaN();
  return report;
}

std::string ik_trajectory_csv(const RobotModel& model, const RigidTransform& desired,
                              const IKResult& result) {
  std::ostringstream out;
  out << "iteration,q1,q2,q3,q4,q5,q6,position_error,orientation_error\n";
  out.precision(12);
  for (std::size_t i = 0; i < result.trajectory.size(); ++i) {
    const JointConfig& q = result.trajectory[i];
    PoseError err = pose_error(forward_kinematics(model, q), desired);
    out << i;
    for (int k = 0; k < kNumJoints; ++k) out << ',' << q[k];
    out << ',' << err.linear.norm() << ',' << err.angular.norm() << '\n';
  }
  return out.str();
}

}  // namespace pickstow
