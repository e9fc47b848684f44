#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "pickstow/geometry.hpp"
#include "pickstow/ik.hpp"
#include "pickstow/kinematics.hpp"
#include "pickstow/perception.hpp"
#include "pickstow/rack_geometry.hpp"

namespace pickstow {

struct InfeasibleGoalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using VoxelIndex = std::array<int, 3>;

/// Occupancy grid: floor-quantized integer cells relative to an origin.
struct VoxelGrid {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double voxel_size = 0.01;
  std::set<VoxelIndex> occupied;

  VoxelIndex quantize(const Eigen::Vector3d& p) const;
  Aabb voxel_box(const VoxelIndex& idx) const;
};

/// Quantize points into a grid; points inside exclusion (the target object,
/// which the robot is allowed to touch) are skipped.
VoxelGrid voxelize(const std::vector<Eigen::Vector3d>& points, double voxel_size,
                   const std::optional<Aabb>& exclusion = std::nullopt,
                   const Eigen::Vector3d& origin = Eigen::Vector3d::Zero());
/// Valid points of an organized cloud, same quantization.
VoxelGrid voxelize(const PointCloud& cloud, double voxel_size,
                   const std::optional<Aabb>& exclusion = std::nullopt,
                   const Eigen::Vector3d& origin = Eigen::Vector3d::Zero());

/// Static obstacle set: boxes plus an occupancy grid, with a coarse bucket
/// index over voxels so capsule queries touch only nearby cells.
class CollisionWorld {
 public:
  CollisionWorld() = default;
  CollisionWorld(std::vector<Aabb> boxes, VoxelGrid voxels = {});

  const std::vector<Aabb>& boxes() const { return boxes_; }
  const VoxelGrid& voxels() const { return voxels_; }

  /// True iff any obstacle lies within `radius` of segment [a, b].
  bool segment_hits(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double radius) const;

 private:
  std::vector<Aabb> boxes_;
  VoxelGrid voxels_;
  std::unordered_map<std::uint64_t, std::vector<VoxelIndex>> buckets_;
};

/// True iff any link capsule (segment between consecutive link-frame
/// origins, per-link radius) intersects a box or an occupied voxel.
/// Exact segment-box distances; nothing is sampled along the capsule.
bool in_collision(const RobotModel& model, const JointConfig& q, const CollisionWorld& world);

struct PlanRequest {
  JointConfig start;
  std::optional<JointConfig> goal_config;
  std::optional<RigidTransform> goal_pose;  ///< resolved via IK when goal_config is absent
  const CollisionWorld* world = nullptr;
  double step_size = 0.1;   ///< rad, joint-space Euclidean
  double goal_bias = 0.1;
  int max_samples = 5000;
  std::uint64_t seed = 0;
};

struct Plan {
  std::vector<JointConfig> waypoints;
  std::string segment_label;
  int samples_used = 0;
  bool success = false;
  double plan_seconds = 0.0;  ///< wall-clock planning time

  double length() const;  ///< sum of joint-space distances between waypoints
};

/// Single-tree RRT with goal bias, fixed-step extension, edge collision
/// checks at step_size/4 sub-resolution and 100 random shortcut attempts.
/// Deterministic given the request (including seed). Throws
/// InfeasibleGoalError when the goal is in collision or pose IK fails;
/// throws std::invalid_argument when the start violates preconditions.
/// Sample exhaustion returns success = false.
Plan plan_rrt(const RobotModel& model, const PlanRequest& request);

/// Right-handed frame whose third column is the given direction.
Eigen::Matrix3d frame_with_z(const Eigen::Vector3d& z_axis);

/// Joint interpolation from `from` to `to` at step_size spacing, every
/// waypoint collision-checked; success = false on the first hit.
Plan straight_line_plan(const RobotModel& model, const CollisionWorld& world,
                        const JointConfig& from, const JointConfig& to, double step_size,
                        std::string label);

/// Predefined configurations the four-segment sequence moves between.
struct SequenceConfig {
  JointConfig home;
  std::array<JointConfig, RackModel::kBins> bin_view{};
  JointConfig tote_view;
  JointConfig tote_drop;
  double standoff_m = 0.02;  ///< pre-grasp distance along the suction normal
  double step_size = 0.1;
  double goal_bias = 0.1;
  int max_samples = 5000;
};

/// Generate home / per-bin view / tote view and drop configurations by IK:
/// each bin view faces its bin center from the camera standoff; the tote
/// poses look down at the tote from above. `camera_advance_m` is how far
/// the tool tip extends past the camera mount along the optical axis (a
/// wrist-mounted camera with a suction tube beyond it): view configs place
/// the tip that far past the camera pose so the camera itself sits at the
/// pose the scenes are rendered from.
SequenceConfig make_sequence_config(const RobotModel& model, const RackModel& rack,
                                    const Eigen::Vector3d& tote_position,
                                    double camera_advance_m = 0.0);

/// The four grasp segments between explicit view/drop configurations:
/// home->view (straight-line, collision checked), view->pre-grasp (RRT to
/// the IK solution at standoff along +normal), grasp->drop (RRT; pass a
/// world whose voxelization excluded the target), drop->home
/// (straight-line). A failed segment is returned with success = false and
/// later segments are not attempted. Labels follow the pick taxonomy.
std::vector<Plan> grasp_motion_sequence(const RobotModel& model, const SequenceConfig& config,
                                        const JointConfig& view, const JointConfig& drop,
                                        const SuctionTarget& grasp_target,
                                        const CollisionWorld& world, std::uint64_t seed);

/// Pick instantiation: view = the bin's view config, drop = the tote.
std::vector<Plan> pick_motion_sequence(const RobotModel& model, const RackModel& rack,
                                       int bin_index, const SuctionTarget& grasp_target,
                                       const CollisionWorld& world, const SequenceConfig& config,
                                       std::uint64_t seed);

/// CSV rows "segment,waypoint,q1..q6" for every waypoint of every plan.
std::string plans_to_csv(const std::vector<Plan>& plans);

}  // namespace pickstow
