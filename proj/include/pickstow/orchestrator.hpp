#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pickstow/calibration.hpp"
#include "pickstow/perception.hpp"
#include "pickstow/planning.hpp"
#include "pickstow/rack_geometry.hpp"
#include "pickstow/scene.hpp"

namespace pickstow {

/// Malformed or inconsistent work order; the message names the offending
/// JSON path or the bin/item pair.
struct WorkOrderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad run configuration (missing scene, unknown item in the score table, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TaskMode { Pick, Stow };

inline constexpr int kMaxItemsPerBin = 10;

/// Bin names are "bin_A" .. "bin_L", row-major from the bottom-left bin.
std::string bin_index_to_name(int index);
int bin_name_to_index(const std::string& name);  // throws WorkOrderError

struct PickTarget {
  std::string bin_name;
  std::string item_id;
};

struct WorkOrder {
  TaskMode mode = TaskMode::Pick;
  std::map<std::string, std::vector<std::string>> bin_contents;
  std::vector<std::string> tote_contents;
  std::vector<PickTarget> targets;       ///< pick mode
  std::vector<std::string> stow_items;   ///< stow mode
};

/// Schema: {"mode":"pick"|"stow", "bin_contents":{"bin_A":[...],...},
/// "tote_contents":[...], "work_order":[{"bin":...,"item":...},...] or
/// ["item",...] for stow}. Listed bins hold 1..10 items; every pick target
/// must appear in its bin, every stow item in the tote.
WorkOrder parse_work_order(const std::string& json_text);
std::string work_order_to_json(const WorkOrder& order);

enum class AttemptOutcome { Succeeded, WrongItem, Dropped, PlanFailed, PerceptionFailed };

std::string to_string(AttemptOutcome outcome);

struct TaskAttempt {
  PickTarget target;  ///< stow attempts record the destination bin
  AttemptOutcome outcome = AttemptOutcome::PerceptionFailed;
  std::map<std::string, double> stage_timings;  ///< stage name -> seconds
  std::optional<SuctionTarget> suction_point;   ///< robot base frame
  std::vector<Plan> plans;
};

struct ScoreTable {
  std::map<std::string, double> item_rewards;
  double wrong_item_penalty = -5.0;
  double dropped_penalty = -5.0;
};

/// Uniform placeholder rewards (10 points per catalog item).
ScoreTable default_score_table();

/// Rewards for succeeded attempts plus (negative) penalties for wrong_item
/// and dropped; plan/perception failures score 0. Throws ConfigError when a
/// succeeded item is missing from the table.
double score_run(const std::vector<TaskAttempt>& attempts, const ScoreTable& table);

struct RunReport {
  std::vector<TaskAttempt> attempts;
  double total_score = 0.0;
  double items_per_minute = 0.0;
  double loop_time_mean = 0.0;
};

/// Simulated scene inputs: per-bin object lists plus the tote contents.
struct SceneLibrary {
  std::map<int, BinScene> bins;
  std::vector<SceneObject> tote_objects;
  double tote_noise_sigma_m = 0.0;
};

struct SuctionThresholds {
  double max_surface_distance_m = 0.005;
  double max_normal_angle_rad = 15.0 * M_PI / 180.0;
  double cup_radius_m = 0.015;
};

/// Attribute the suction point to the nearest object surface. Succeeded
/// needs the point within 5 mm of the intended item's surface, the grasp
/// normal within 15 degrees of the true surface normal and a sealable patch
/// at least the cup radius wide; a point on some other item's surface is
/// WrongItem; everything else is Dropped.
AttemptOutcome simulate_suction(const SuctionTarget& target,
                                const std::vector<SceneObject>& objects,
                                const std::string& intended_item,
                                const SuctionThresholds& thresholds = {});

/// Rack placed mid-workspace: front plane 0.5 m ahead of the base, facing
/// the robot, bottom row just below base height so all 12 bins stay inside
/// the arm's comfortable reach.
RackConfig mid_workspace_rack_config();

/// Length of the suction tube between the camera mount at the flange and
/// the cup at the tip. View configurations place the flange-mounted camera
/// at the rendered pose, with the tube extending this far past it.
inline constexpr double kSuctionTubeLength = 0.15;

/// Arm fitted with a suction tube past the flange. The tube is the only
/// part slim enough to enter a bin; the wrist stays outside the rack front
/// plane at every grasp standoff.
RobotModel picking_robot_model();

struct OrchestratorConfig {
  RobotModel robot = picking_robot_model();
  RackConfig rack = mid_workspace_rack_config();
  PerceptionSettings perception;
  SuctionThresholds suction;
  ScoreTable score_table = default_score_table();
  double voxel_size = 0.01;
  double step_size = 0.1;
  double goal_bias = 0.1;
  // Above the planner's bare default: bin-entry corridors are narrow and a
  // failed attempt costs the whole item, while extra samples cost ~25 us
  // each.
  int max_samples = 20000;
  Eigen::Vector3d tote_position = Eigen::Vector3d(0.15, -0.45, -0.35);
  int calibration_points = 8;
  double calibration_noise_m = 0.0005;
};

/// Round-trip the run configuration. Every key is optional; absent keys
/// keep their defaults. Angles in the JSON are degrees where named so.
nlohmann::json orchestrator_config_to_json(const OrchestratorConfig& config);
OrchestratorConfig orchestrator_config_from_json(const nlohmann::json& j);

/// Run every pick target through the full loop: render the bin, locate the
/// suction target, estimate the camera extrinsics from synthetic point
/// pairs, plan the four motion segments and simulate the suction grasp.
/// Failures are per-attempt outcomes; the loop always continues.
RunReport run_pick_task(const WorkOrder& order, const SceneLibrary& scenes,
                        const OrchestratorConfig& config, std::uint64_t seed);

/// Same pipeline from a top-down tote view; destination is the
/// least-occupied bin (ties to the lowest index). Items whose perception
/// fails are re-queued once the queue makes progress, so an occluded item
/// can succeed after its occluder is stowed.
RunReport run_stow_task(const WorkOrder& order, const SceneLibrary& scenes,
                        const OrchestratorConfig& config, std::uint64_t seed);

/// The per-attempt stage taxonomy, in CSV column order.
const std::vector<std::string>& stage_taxonomy();

/// Write <dir>/metrics.csv (one row per attempt plus a mean summary row)
/// and <dir>/summary.json. Throws std::runtime_error naming the path on
/// I/O failure.
void emit_metrics(const RunReport& report, const std::string& out_dir);

/// Deterministic single-object-per-bin scene set for the given order:
/// every listed bin gets its items placed upright on the bin floor.
SceneLibrary make_scene_library(const WorkOrder& order, const RackModel& rack,
                                const Eigen::Vector3d& tote_position, std::uint64_t seed,
                                double noise_sigma_m = 0.0);

nlohmann::json scene_library_to_json(const SceneLibrary& scenes);
SceneLibrary scene_library_from_json(const nlohmann::json& j);

}  // namespace pickstow
