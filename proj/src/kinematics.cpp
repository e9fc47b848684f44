#include "pickstow/kinematics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace pickstow {

bool within_limits(const JointConfig& q, const RobotModel& model) {
  for (int i = 0; i < kNumJoints; ++i) {
    if (q[i] < model.joint_limits[i].first || q[i] > model.joint_limits[i].second) {
      return false;
    }
  }
  return true;
}

RobotModel ur5_model() {
  RobotModel m;
  // UR5 table values kept verbatim (1.5708, not pi/2).
  m.dh = {DHRow{0.0, 0.0895, 1.5708, 0.0},
          DHRow{-0.425, 0.0, 0.0, 0.0},
          DHRow{-0.3923, 0.0, 0.0, 0.0},
          DHRow{0.0, 0.1092, 1.5708, 0.0},
          DHRow{0.0, 0.0947, -1.5708, 0.0},
          DHRow{0.0, 0.0823, 0.0, 0.0}};
  for (int i = 0; i < kNumJoints; ++i) {
    m.joint_limits[i] = {-2.0 * M_PI, 2.0 * M_PI};
    m.link_radii[i] = 0.05;
  }
  return m;
}

RigidTransform dh_transform(const DHRow& row, double q) {
  double theta = q + row.theta_offset;
  double ct = std::cos(theta), st = std::sin(theta);
  double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
  RigidTransform t;
  t.rotation << ct, -st * ca, st * sa,
                st, ct * ca, -ct * sa,
                0.0, sa, ca;
  t.translation << row.a * ct, row.a * st, row.d;
  return t;
}

RigidTransform forward_kinematics(const RobotModel& model, const JointConfig& q) {
  RigidTransform t;
  for (int i = 0; i < kNumJoints; ++i) {
    t = t * dh_transform(model.dh[i], q[i]);
  }
  return t;
}

std::vector<RigidTransform> link_frames(const RobotModel& model, const JointConfig& q) {
  std::vector<RigidTransform> frames;
  frames.reserve(kNumJoints + 1);
  frames.push_back(RigidTransform::identity());
  for (int i = 0; i < kNumJoints; ++i) {
    frames.push_back(frames.back() * dh_transform(model.dh[i], q[i]));
  }
  return frames;
}

Matrix6d geometric_jacobian(const RobotModel& model, const JointConfig& q) {
  std::vector<RigidTransform> frames = link_frames(model, q);
  const Eigen::Vector3d p_e = frames.back().translation;
  Matrix6d jac;
  for (int i = 0; i < kNumJoints; ++i) {
    // Joint i+1 rotates about the z axis of frame i.
    Eigen::Vector3d z = frames[i].rotation.col(2);
    Eigen::Vector3d p = frames[i].translation;
    jac.block<3, 1>(0, i) = z.cross(p_e - p);
    jac.block<3, 1>(3, i) = z;
  }
  return jac;
}

std::string robot_model_to_json(const RobotModel& model) {
  nlohmann::json j;
  for (const DHRow& row : model.dh) {
    j["dh"].push_back({{"a", row.a},
                       {"d", row.d},
                       {"alpha", row.alpha},
                       {"theta_offset", row.theta_offset}});
  }
  for (const auto& [lo, hi] : model.joint_limits) {
    j["joint_limits"].push_back({lo, hi});
  }
  j["link_radii"] = model.link_radii;
  return j.dump(2);
}

RobotModel robot_model_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  RobotModel m;
  const auto& dh = j.at("dh");
  if (dh.size() != kNumJoints) {
    throw std::invalid_argument("robot model: expected exactly 6 dh rows");
  }
  for (int i = 0; i < kNumJoints; ++i) {
    m.dh[i] = {dh[i].at("a").get<double>(), dh[i].at("d").get<double>(),
               dh[i].at("alpha").get<double>(), dh[i].value("theta_offset", 0.0)};
  }
  const auto& limits = j.at("joint_limits");
  if (limits.size() != kNumJoints) {
    throw std::invalid_argument("robot model: expected 6 joint limit pairs");
  }
  for (int i = 0; i < kNumJoints; ++i) {
    m.joint_limits[i] = {limits[i][0].get<double>(), limits[i][1].get<double>()};
    if (!(m.joint_limits[i].first < m.joint_limits[i].second)) {
      throw std::invalid_argument("robot model: joint limit min must be below max");
    }
  }
  const auto& radii = j.at("link_radii");
  if (radii.size() != kNumJoints) {
    throw std::invalid_argument("robot model: expected 6 link radii");
  }
  for (int i = 0; i < kNumJoints; ++i) {
    m.link_radii[i] = radii[i].get<double>();
    if (m.link_radii[i] <= 0) {
      throw std::invalid_argument("robot model: link radii must be positive");
    }
  }
  return m;
}

}  // namespace pickstow
