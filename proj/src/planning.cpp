#include "pickstow/planning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "pickstow/rng.hpp"

namespace pickstow {

namespace {

constexpr int kBucketShift = 3;  // 8^3 voxels per bucket
constexpr int kBucketBias = 1 << 20;

std::uint64_t bucket_key(int bx, int by, int bz) {
  return (static_cast<std::uint64_t>(bx + kBucketBias) << 42) |
         (static_cast<std::uint64_t>(by + kBucketBias) << 21) |
         static_cast<std::uint64_t>(bz + kBucketBias);
}

int floor_div_index(double v) { return static_cast<int>(std::floor(v)); }

}  // namespace

VoxelIndex VoxelGrid::quantize(const Eigen::Vector3d& p) const {
  return {floor_div_index((p.x() - origin.x()) / voxel_size),
          floor_div_index((p.y() - origin.y()) / voxel_size),
          floor_div_index((p.z() - origin.z()) / voxel_size)};
}

Aabb VoxelGrid::voxel_box(const VoxelIndex& idx) const {
  Eigen::Vector3d lo = origin + voxel_size * Eigen::Vector3d(idx[0], idx[1], idx[2]);
  return {lo, lo + Eigen::Vector3d::Constant(voxel_size)};
}

VoxelGrid voxelize(const std::vector<Eigen::Vector3d>& points, double voxel_size,
                   const std::optional<Aabb>& exclusion, const Eigen::Vector3d& origin) {
  if (!(voxel_size > 0.0)) throw std::invalid_argument("voxelize: voxel_size must be > 0");
  VoxelGrid grid;
  grid.origin = origin;
  grid.voxel_size = voxel_size;
  for (const auto& p : points) {
    if (exclusion && exclusion->contains(p)) continue;
    grid.occupied.insert(grid.quantize(p));
  }
  return grid;
}

VoxelGrid voxelize(const PointCloud& cloud, double voxel_size, const std::optional<Aabb>& exclusion,
                   const Eigen::Vector3d& origin) {
  std::vector<Eigen::Vector3d> points;
  points.reserve(cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (cloud.valid.empty() || cloud.valid[i]) points.push_back(cloud.points[i]);
  }
  return voxelize(points, voxel_size, exclusion, origin);
}

CollisionWorld::CollisionWorld(std::vector<Aabb> boxes, VoxelGrid voxels)
    : boxes_(std::move(boxes)), voxels_(std::move(voxels)) {
  for (const Aabb& box : boxes_) {
    if ((box.extents().array() <= 0.0).any()) {
      throw std::invalid_argument("CollisionWorld: boxes must have positive extents");
    }
  }
  for (const VoxelIndex& idx : voxels_.occupied) {
    buckets_[bucket_key(idx[0] >> kBucketShift, idx[1] >> kBucketShift, idx[2] >> kBucketShift)]
        .push_back(idx);
  }
}

bool CollisionWorld::segment_hits(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                  double radius) const {
  for (const Aabb& box : boxes_) {
    if (segment_aabb_distance(a, b, box) <= radius) return true;
  }
  if (voxels_.occupied.empty()) return false;

  const Eigen::Vector3d pad = Eigen::Vector3d::Constant(radius + 1e-9);
  VoxelIndex lo = voxels_.quantize(a.cwiseMin(b) - pad);
  VoxelIndex hi = voxels_.quantize(a.cwiseMax(b) + pad);
  for (int bx = lo[0] >> kBucketShift; bx <= (hi[0] >> kBucketShift); ++bx) {
    for (int by = lo[1] >> kBucketShift; by <= (hi[1] >> kBucketShift); ++by) {
      for (int bz = lo[2] >> kBucketShift; bz <= (hi[2] >> kBucketShift); ++bz) {
        auto it = buckets_.find(bucket_key(bx, by, bz));
        if (it == buckets_.end()) continue;
        for (const VoxelIndex& idx : it->second) {
          if (segment_aabb_distance(a, b, voxels_.voxel_box(idx)) <= radius) return true;
        }
      }
    }
  }
  return false;
}

bool in_collision(const RobotModel& model, const JointConfig& q, const CollisionWorld& world) {
  std::vector<RigidTransform> frames = link_frames(model, q);
  for (int i = 0; i < kNumJoints; ++i) {
    if (world.segment_hits(frames[i].translation, frames[i + 1].translation,
                           model.link_radii[i])) {
      return true;
    }
  }
  return false;
}

double Plan::length() const {
  double total = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    total += (waypoints[i].angles - waypoints[i - 1].angles).norm();
  }
  return total;
}

namespace {

bool edge_free(const RobotModel& model, const CollisionWorld& world, const JointConfig& from,
               const JointConfig& to, double step_size) {
  const double dist = (to.angles - from.angles).norm();
  if (dist < 1e-12) return true;
  const int n = static_cast<int>(std::ceil(dist / (step_size / 4.0)));
  for (int k = 1; k <= n; ++k) {
    const double t = static_cast<double>(k) / n;
    JointConfig q(from.angles + t * (to.angles - from.angles));
    if (in_collision(model, q, world)) return false;
  }
  return true;
}

// Replace path[i+1 .. j-1] with interpolants of the direct segment, spaced
// at most step_size apart. Length never increases (triangle inequality).
void splice_shortcut(std::vector<JointConfig>& path, std::size_t i, std::size_t j,
                     double step_size) {
  const Vector6d from = path[i].angles;
  const Vector6d to = path[j].angles;
  const double dist = (to - from).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(dist / step_size)));
  std::vector<JointConfig> middle;
  for (int k = 1; k < n; ++k) {
    middle.emplace_back(Vector6d(from + (static_cast<double>(k) / n) * (to - from)));
  }
  path.erase(path.begin() + i + 1, path.begin() + j);
  path.insert(path.begin() + i + 1, middle.begin(), middle.end());
}

}  // namespace

namespace {

struct StageTimer {
  std::chrono::steady_clock::time_point begin = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
  }
};

}  // namespace

Plan plan_rrt(const RobotModel& model, const PlanRequest& request) {
  StageTimer timer;
  if (!request.world) throw std::invalid_argument("plan_rrt: request.world must be set");
  if (!(request.step_size > 0.0)) throw std::invalid_argument("plan_rrt: step_size must be > 0");
  if (request.goal_bias < 0.0 || request.goal_bias > 1.0) {
    throw std::invalid_argument("plan_rrt: goal_bias must be in [0, 1]");
  }
  const CollisionWorld& world = *request.world;
  if (in_collision(model, request.start, world)) {
    throw std::invalid_argument("plan_rrt: start configuration in collision");
  }

  JointConfig goal;
  if (request.goal_config) {
    goal = *request.goal_config;
  } else if (request.goal_pose) {
    IKSettings ik;
    ik.max_iterations = 300;
    IKResult sol = solve_ik_dls(model, *request.goal_pose, request.start, ik);
    if (!sol.converged) {
      throw InfeasibleGoalError("plan_rrt: IK did not converge on the goal pose");
    }
    goal = sol.q;
  } else {
    throw std::invalid_argument("plan_rrt: request needs goal_config or goal_pose");
  }
  if (in_collision(model, goal, world)) {
    throw InfeasibleGoalError("plan_rrt: goal configuration in collision");
  }

  Plan plan;
  if ((goal.angles - request.start.angles).norm() < 1e-12) {
    plan.waypoints = {request.start};
    plan.success = true;
    plan.plan_seconds = timer.seconds();
    return plan;
  }

  struct Node {
    JointConfig q;
    int parent;
  };
  std::vector<Node> nodes{{request.start, -1}};
  Rng rng(request.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::array<std::uniform_real_distribution<double>, kNumJoints> joint_dist;
  for (int i = 0; i < kNumJoints; ++i) {
    joint_dist[i] = std::uniform_real_distribution<double>(model.joint_limits[i].first,
                                                           model.joint_limits[i].second);
  }

  const double step = request.step_size;
  int goal_node = -1;
  int samples = 0;
  while (samples < request.max_samples && goal_node < 0) {
    ++samples;
    JointConfig target;
    const bool goal_pull = u01(rng) < request.goal_bias;
    if (goal_pull) {
      target = goal;
    } else {
      for (int i = 0; i < kNumJoints; ++i) target[i] = joint_dist[i](rng);
    }

    int nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      double d = (nodes[i].q.angles - target.angles).squaredNorm();
      if (d < best) {
        best = d;
        nearest = static_cast<int>(i);
      }
    }

    // Exploration samples take a single fixed step (Voronoi-biased growth);
    // goal pulls walk fixed steps all the way until blocked or connected.
    // Greedy goal extension matters in the bin-entry corridor: with a single
    // step per pull, a random node that is nearest the goal but whose next
    // step is blocked permanently soaks up every pull, while a greedy pull
    // rides a free straight line to the goal before such traps form.
    int current = nearest;
    while (true) {
      const Vector6d dir = target.angles - nodes[current].q.angles;
      const double dist = dir.norm();
      if (dist < 1e-12) break;
      JointConfig fresh(nodes[current].q.angles + (std::min(step, dist) / dist) * dir);
      if (!edge_free(model, world, nodes[current].q, fresh, step)) break;
      nodes.push_back({fresh, current});
      current = static_cast<int>(nodes.size()) - 1;

      if ((fresh.angles - goal.angles).norm() <= step &&
          edge_free(model, world, fresh, goal, step)) {
        nodes.push_back({goal, current});
        goal_node = static_cast<int>(nodes.size()) - 1;
        break;
      }
      if (!goal_pull || dist <= step) break;
    }
    if (goal_node >= 0) break;
  }
  plan.samples_used = samples;
  if (goal_node < 0) {
    plan.plan_seconds = timer.seconds();
    return plan;  // exhausted; success stays false
  }

  std::vector<JointConfig> path;
  for (int i = goal_node; i >= 0; i = nodes[i].parent) path.push_back(nodes[i].q);
  std::reverse(path.begin(), path.end());

  for (int attempt = 0; attempt < 100 && path.size() >= 3; ++attempt) {
    std::uniform_int_distribution<std::size_t> pick_i(0, path.size() - 3);
    const std::size_t i = pick_i(rng);
    std::uniform_int_distribution<std::size_t> pick_j(i + 2, path.size() - 1);
    const std::size_t j = pick_j(rng);
    if (edge_free(model, world, path[i], path[j], step)) splice_shortcut(path, i, j, step);
  }

  plan.waypoints = std::move(path);
  plan.success = true;
  plan.plan_seconds = timer.seconds();
  return plan;
}

Eigen::Matrix3d frame_with_z(const Eigen::Vector3d& z_axis) {
  const Eigen::Vector3d z = z_axis.normalized();
  const Eigen::Vector3d ref =
      std::abs(z.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d x = ref.cross(z).normalized();
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = z.cross(x);
  r.col(2) = z;
  return r;
}

Plan straight_line_plan(const RobotModel& model, const CollisionWorld& world,
                        const JointConfig& from, const JointConfig& to, double step_size,
                        std::string label) {
  StageTimer timer;
  Plan plan;
  plan.segment_label = std::move(label);
  const double dist = (to.angles - from.angles).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(dist / step_size)));
  plan.waypoints.push_back(from);
  if (dist >= 1e-12) {
    for (int k = 1; k <= n; ++k) {
      plan.waypoints.emplace_back(
          Vector6d(from.angles + (static_cast<double>(k) / n) * (to.angles - from.angles)));
    }
  }
  plan.success = true;
  for (const JointConfig& q : plan.waypoints) {
    if (in_collision(model, q, world)) {
      plan.success = false;
      break;
    }
  }
  plan.plan_seconds = timer.seconds();
  return plan;
}

SequenceConfig make_sequence_config(const RobotModel& model, const RackModel& rack,
                                    const Eigen::Vector3d& tote_position,
                                    double camera_advance_m) {
  SequenceConfig config;
  config.home = JointConfig(0.0, -M_PI / 2.0, M_PI / 2.0, -M_PI / 2.0, -M_PI / 2.0, 0.0);

  IKSettings ik;
  ik.max_iterations = 400;

  // The solver is local, so the seed decides which arm posture (elbow up or
  // down, wrist flipped or not) the solution lands in. Seeding a small grid
  // of postures around home and keeping the converged solution closest to
  // home keeps every stored config in one connected region of joint space;
  // plans between them then never have to cross a posture change inside the
  // rack.
  std::vector<Vector6d> seeds;
  for (double dj1 : {-0.5, 0.0, 0.5}) {
    for (double dj2 : {0.0, -0.5, 0.5}) {
      for (double dj4 : {0.0, 0.7, -0.7}) {
        Vector6d s = config.home.angles;
        s[0] += dj1;
        s[1] += dj2;
        s[3] += dj4;
        seeds.push_back(s);
      }
    }
  }
  auto solve_near_home = [&](const RigidTransform& pose) {
    Vector6d best = Vector6d::Zero();
    double best_dist = std::numeric_limits<double>::infinity();
    for (const Vector6d& seed : seeds) {
      const IKResult sol = solve_ik_dls(model, pose, JointConfig(seed), ik);
      if (!sol.converged) continue;
      const double dist = (sol.q.angles - config.home.angles).norm();
      if (dist < best_dist) {
        best_dist = dist;
        best = sol.q.angles;
      }
    }
    if (std::isinf(best_dist)) {
      IKSettings pos_only = ik;
      pos_only.position_only = true;
      return solve_ik_dls(model, pose, config.home, pos_only).q;
    }
    return JointConfig(best);
  };
  auto solve_camera_pose = [&](RigidTransform pose) {
    pose.translation += camera_advance_m * pose.rotation.col(2);
    return solve_near_home(pose);
  };

  for (int bin = 0; bin < RackModel::kBins; ++bin) {
    config.bin_view[bin] = solve_camera_pose(bin_view_camera_pose(rack, bin));
  }

  auto downward_pose = [](const Eigen::Vector3d& position) {
    RigidTransform pose;
    pose.rotation = frame_with_z(-Eigen::Vector3d::UnitZ());
    pose.translation = position;
    return pose;
  };
  config.tote_drop =
      solve_near_home(downward_pose(tote_position + Eigen::Vector3d(0.0, 0.0, 0.25)));
  config.tote_view =
      solve_camera_pose(downward_pose(tote_position + Eigen::Vector3d(0.0, 0.0, 0.35)));
  return config;
}

std::vector<Plan> grasp_motion_sequence(const RobotModel& model, const SequenceConfig& config,
                                        const JointConfig& view, const JointConfig& drop,
                                        const SuctionTarget& grasp_target,
                                        const CollisionWorld& world, std::uint64_t seed) {
  std::vector<Plan> plans;
  plans.push_back(
      straight_line_plan(model, world, config.home, view, config.step_size, "home_to_binview"));
  if (!plans.back().success) return plans;

  StageTimer ik_timer;
  RigidTransform grasp;
  grasp.rotation = frame_with_z(-grasp_target.normal);
  grasp.translation = grasp_target.point + config.standoff_m * grasp_target.normal;

  // Track the pose from the view to the grasp in short Cartesian steps so
  // the solution stays in the view config's joint-space branch; a one-shot
  // solve tends to wander into a distant branch that no collision-free
  // path can reach with the tool near the rack.
  const RigidTransform view_pose = forward_kinematics(model, view);
  const Eigen::Quaterniond r0(view_pose.rotation);
  const Eigen::Quaterniond r1(grasp.rotation);
  const double travel = (grasp.translation - view_pose.translation).norm();
  const int track_steps = std::max(1, static_cast<int>(std::ceil(travel / 0.02)));
  IKSettings track;
  track.max_iterations = 60;
  IKResult sol;
  sol.q = view;
  sol.converged = true;
  for (int k = 1; k <= track_steps && sol.converged; ++k) {
    const double t = static_cast<double>(k) / track_steps;
    RigidTransform pose_k;
    pose_k.rotation = r0.slerp(t, r1).toRotationMatrix();
    pose_k.translation = (1.0 - t) * view_pose.translation + t * grasp.translation;
    sol = solve_ik_dls(model, pose_k, sol.q, track);
  }
  if (!sol.converged) {
    IKSettings ik;
    ik.max_iterations = 400;
    sol = solve_ik_dls(model, grasp, view, ik);
  }
  if (!sol.converged) {
    Plan failed;
    failed.segment_label = "pre_grasp";
    failed.plan_seconds = ik_timer.seconds();
    plans.push_back(std::move(failed));
    return plans;
  }
  const double ik_seconds = ik_timer.seconds();

  PlanRequest request;
  request.world = &world;
  request.step_size = config.step_size;
  request.goal_bias = config.goal_bias;
  request.max_samples = config.max_samples;

  request.start = view;
  request.goal_config = sol.q;
  request.seed = derive_seed(seed, 2);
  try {
    Plan pre = plan_rrt(model, request);
    pre.segment_label = "pre_grasp";
    pre.plan_seconds += ik_seconds;
    plans.push_back(std::move(pre));
  } catch (const InfeasibleGoalError&) {
    Plan failed;
    failed.segment_label = "pre_grasp";
    failed.plan_seconds = ik_seconds;
    plans.push_back(std::move(failed));
  }
  if (!plans.back().success) return plans;

  request.start = sol.q;
  request.goal_config = drop;
  request.seed = derive_seed(seed, 3);
  try {
    Plan post = plan_rrt(model, request);
    post.segment_label = "post_grasp";
    plans.push_back(std::move(post));
  } catch (const InfeasibleGoalError&) {
    Plan failed;
    failed.segment_label = "post_grasp";
    plans.push_back(std::move(failed));
  }
  if (!plans.back().success) return plans;

  plans.push_back(
      straight_line_plan(model, world, drop, config.home, config.step_size, "tote_to_home"));
  return plans;
}

std::vector<Plan> pick_motion_sequence(const RobotModel& model, const RackModel& /*rack*/,
                                       int bin_index, const SuctionTarget& grasp_target,
                                       const CollisionWorld& world, const SequenceConfig& config,
                                       std::uint64_t seed) {
  if (bin_index < 0 || bin_index >= RackModel::kBins) {
    throw std::out_of_range("pick_motion_sequence: bin index must be in [0, 12)");
  }
  return grasp_motion_sequence(model, config, config.bin_view[bin_index], config.tote_drop,
                               grasp_target, world, seed);
}

std::string plans_to_csv(const std::vector<Plan>& plans) {
  std::ostringstream out;
  out << "segment,waypoint,q1,q2,q3,q4,q5,q6\n";
  out.precision(12);
  for (const Plan& plan : plans) {
    for (std::size_t w = 0; w < plan.waypoints.size(); ++w) {
      out << plan.segment_label << ',' << w;
      for (int i = 0; i < kNumJoints; ++i) out << ',' << plan.waypoints[w][i];
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace pickstow
