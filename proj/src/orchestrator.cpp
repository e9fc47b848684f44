#include "pickstow/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pickstow/rng.hpp"

namespace pickstow {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point begin) {
  return std::chrono::duration<double>(Clock::now() - begin).count();
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

const std::vector<std::string> kStages = {
    "json_read",        "motion1_home_to_binview", "object_recognition", "motion2_pregrasp",
    "motion3_postgrasp", "motion4_tote_to_home",    "loop_total"};

void zero_stages(TaskAttempt& attempt) {
  for (const std::string& stage : kStages) attempt.stage_timings[stage] = 0.0;
}

void finish_loop_total(TaskAttempt& attempt) {
  double total = 0.0;
  for (const std::string& stage : kStages) {
    if (stage != "loop_total") total += attempt.stage_timings[stage];
  }
  attempt.stage_timings["loop_total"] = total;
}

}  // namespace

std::string bin_index_to_name(int index) {
  if (index < 0 || index >= RackModel::kBins) {
    throw std::out_of_range("bin index must be in [0, 12)");
  }
  return std::string("bin_") + static_cast<char>('A' + index);
}

int bin_name_to_index(const std::string& name) {
  if (name.size() == 5 && name.rfind("bin_", 0) == 0 && name[4] >= 'A' && name[4] <= 'L') {
    return name[4] - 'A';
  }
  throw WorkOrderError("unknown bin name: '" + name + "' (expected bin_A .. bin_L)");
}

std::string to_string(AttemptOutcome outcome) {
  switch (outcome) {
    case AttemptOutcome::Succeeded:
      return "succeeded";
    case AttemptOutcome::WrongItem:
      return "wrong_item";
    case AttemptOutcome::Dropped:
      return "dropped";
    case AttemptOutcome::PlanFailed:
      return "plan_failed";
    case AttemptOutcome::PerceptionFailed:
      return "perception_failed";
  }
  return "unknown";
}

WorkOrder parse_work_order(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw WorkOrderError(std::string("work order is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw WorkOrderError("root: expected a JSON object");

  WorkOrder order;
  if (!j.contains("mode") || !j["mode"].is_string()) {
    throw WorkOrderError("mode: expected \"pick\" or \"stow\"");
  }
  const std::string mode = j["mode"].get<std::string>();
  if (mode == "pick") {
    order.mode = TaskMode::Pick;
  } else if (mode == "stow") {
    order.mode = TaskMode::Stow;
  } else {
    throw WorkOrderError("mode: expected \"pick\" or \"stow\", got \"" + mode + "\"");
  }

  if (!j.contains("bin_contents") || !j["bin_contents"].is_object()) {
    throw WorkOrderError("bin_contents: expected an object");
  }
  for (const auto& [bin, items] : j["bin_contents"].items()) {
    try {
      bin_name_to_index(bin);
    } catch (const WorkOrderError&) {
      throw WorkOrderError("bin_contents." + bin + ": unknown bin name");
    }
    if (!items.is_array()) throw WorkOrderError("bin_contents." + bin + ": expected an array");
    std::vector<std::string> list;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!items[i].is_string()) {
        throw WorkOrderError("bin_contents." + bin + "[" + std::to_string(i) +
                             "]: expected a string");
      }
      list.push_back(items[i].get<std::string>());
    }
    if (list.empty() || list.size() > kMaxItemsPerBin) {
      throw WorkOrderError("bin_contents." + bin + ": holds " + std::to_string(list.size()) +
                           " items, allowed 1.." + std::to_string(kMaxItemsPerBin));
    }
    order.bin_contents[bin] = std::move(list);
  }

  if (j.contains("tote_contents")) {
    if (!j["tote_contents"].is_array()) throw WorkOrderError("tote_contents: expected an array");
    for (std::size_t i = 0; i < j["tote_contents"].size(); ++i) {
      if (!j["tote_contents"][i].is_string()) {
        throw WorkOrderError("tote_contents[" + std::to_string(i) + "]: expected a string");
      }
      order.tote_contents.push_back(j["tote_contents"][i].get<std::string>());
    }
  }

  if (!j.contains("work_order") || !j["work_order"].is_array()) {
    throw WorkOrderError("work_order: expected an array");
  }
  const auto& work = j["work_order"];
  if (order.mode == TaskMode::Pick) {
    for (std::size_t i = 0; i < work.size(); ++i) {
      const std::string path = "work_order[" + std::to_string(i) + "]";
      if (!work[i].is_object() || !work[i].contains("bin") || !work[i].contains("item") ||
          !work[i]["bin"].is_string() || !work[i]["item"].is_string()) {
        throw WorkOrderError(path + ": expected {\"bin\": string, \"item\": string}");
      }
      PickTarget target{work[i]["bin"].get<std::string>(), work[i]["item"].get<std::string>()};
      bin_name_to_index(target.bin_name);
      auto it = order.bin_contents.find(target.bin_name);
      if (it == order.bin_contents.end() ||
          std::count(it->second.begin(), it->second.end(), target.item_id) == 0) {
        throw WorkOrderError(path + ": item '" + target.item_id + "' is not in bin '" +
                             target.bin_name + "'");
      }
      order.targets.push_back(std::move(target));
    }
  } else {
    std::map<std::string, int> tote_count;
    for (const std::string& item : order.tote_contents) ++tote_count[item];
    std::map<std::string, int> requested;
    for (std::size_t i = 0; i < work.size(); ++i) {
      const std::string path = "work_order[" + std::to_string(i) + "]";
      if (!work[i].is_string()) throw WorkOrderError(path + ": expected a string item id");
      std::string item = work[i].get<std::string>();
      if (++requested[item] > tote_count[item]) {
        throw WorkOrderError(path + ": item '" + item + "' is not in the tote");
      }
      order.stow_items.push_back(std::move(item));
    }
  }
  return order;
}

std::string work_order_to_json(const WorkOrder& order) {
  nlohmann::json j;
  j["mode"] = order.mode == TaskMode::Pick ? "pick" : "stow";
  j["bin_contents"] = nlohmann::json::object();
  for (const auto& [bin, items] : order.bin_contents) j["bin_contents"][bin] = items;
  j["tote_contents"] = order.tote_contents;
  if (order.mode == TaskMode::Pick) {
    nlohmann::json targets = nlohmann::json::array();
    for (const auto& t : order.targets) {
      targets.push_back({{"bin", t.bin_name}, {"item", t.item_id}});
    }
    j["work_order"] = targets;
  } else {
    j["work_order"] = order.stow_items;
  }
  return j.dump(2);
}

ScoreTable default_score_table() {
  ScoreTable table;
  for (const ItemSpec& spec : item_catalog()) table.item_rewards[spec.name] = 10.0;
  return table;
}

RackConfig mid_workspace_rack_config() {
  RackConfig config;
  config.plane.origin = Eigen::Vector3d(0.5, -0.24, -0.1);
  config.plane.e_u = Eigen::Vector3d::UnitY();
  config.plane.e_v = Eigen::Vector3d::UnitZ();
  return config;
}

RobotModel picking_robot_model() {
  RobotModel model = ur5_model();
  model.dh[5].d += kSuctionTubeLength;
  model.link_radii = {0.06, 0.055, 0.045, 0.04, 0.04, 0.012};
  // Limits trimmed from the bare arm's full +/-2pi to the envelope the picking
  // task actually uses (every stored view, grasp, and tote config, with ~0.7
  // rad of slack). The planner samples uniformly within the limits, so the
  // trim concentrates samples in the workspace in front of the rack instead
  // of spending them on postures the task never visits.
  model.joint_limits = {{
      {-1.1, 3.1},
      {-4.6, -0.3},
      {0.9, 4.7},
      {-3.5, 2.2},
      {-2.9, 2.4},
      {-M_PI, M_PI},
  }};
  return model;
}

double score_run(const std::vector<TaskAttempt>& attempts, const ScoreTable& table) {
  double score = 0.0;
  for (const TaskAttempt& attempt : attempts) {
    switch (attempt.outcome) {
      case AttemptOutcome::Succeeded: {
        auto it = table.item_rewards.find(attempt.target.item_id);
        if (it == table.item_rewards.end()) {
          throw ConfigError("score table has no reward for item '" + attempt.target.item_id +
                            "'");
        }
        score += it->second;
        break;
      }
      case AttemptOutcome::WrongItem:
        score += table.wrong_item_penalty;
        break;
      case AttemptOutcome::Dropped:
        score += table.dropped_penalty;
        break;
      case AttemptOutcome::PlanFailed:
      case AttemptOutcome::PerceptionFailed:
        break;
    }
  }
  return score;
}

AttemptOutcome simulate_suction(const SuctionTarget& target,
                                const std::vector<SceneObject>& objects,
                                const std::string& intended_item,
                                const SuctionThresholds& thresholds) {
  if (objects.empty()) return AttemptOutcome::Dropped;

  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < objects.size(); ++i) {
    double d = surface_distance(objects[i].shape, objects[i].pose, target.point);
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  if (best_dist > thresholds.max_surface_distance_m) return AttemptOutcome::Dropped;
  if (objects[best].id != intended_item) return AttemptOutcome::WrongItem;

  Eigen::Vector3d true_normal;
  surface_distance(objects[best].shape, objects[best].pose, target.point, &true_normal);
  const double cosine = target.normal.normalized().dot(true_normal);
  if (std::acos(std::clamp(cosine, -1.0, 1.0)) > thresholds.max_normal_angle_rad) {
    return AttemptOutcome::Dropped;
  }
  if (edge_clearance(objects[best].shape, objects[best].pose, target.point) <
      thresholds.cup_radius_m) {
    return AttemptOutcome::Dropped;
  }
  return AttemptOutcome::Succeeded;
}

namespace {

// Camera extrinsics the way the physical system gets them: a rigid-body fit
// over noisy point pairs, not the ground-truth pose.
RigidTransform estimate_camera_pose(const RigidTransform& true_pose, int n_points,
                                    double noise_m, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> lateral(-0.25, 0.25);
  std::uniform_real_distribution<double> depth(0.15, 0.55);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PointPairSet pairs;
  for (int i = 0; i < n_points; ++i) {
    Eigen::Vector3d pc(lateral(rng), lateral(rng), depth(rng));
    Eigen::Vector3d pb = true_pose.apply(pc);
    if (noise_m > 0.0) pb += noise_m * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    pairs.camera_points.push_back(pc);
    pairs.robot_points.push_back(pb);
  }
  return estimate_rigid_transform(pairs).transform;
}

SuctionTarget to_base_frame(const SuctionTarget& camera_target, const RigidTransform& extrinsics) {
  SuctionTarget out;
  out.point = extrinsics.apply(camera_target.point);
  out.normal = (extrinsics.rotation * camera_target.normal).normalized();
  out.centroid = extrinsics.apply(camera_target.centroid);
  out.confidence = camera_target.confidence;
  return out;
}

// Ground-truth instance the perceived point belongs to, among objects with
// the queried id; used for the voxel exclusion box.
const SceneObject* intended_instance(const std::vector<SceneObject>& objects,
                                     const std::string& item, const Eigen::Vector3d& point) {
  const SceneObject* best = nullptr;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const SceneObject& obj : objects) {
    if (obj.id != item) continue;
    double d = surface_distance(obj.shape, obj.pose, point);
    if (d < best_dist) {
      best_dist = d;
      best = &obj;
    }
  }
  return best;
}

struct MotionStageResult {
  std::vector<Plan> plans;
  bool complete = false;
};

void record_motion_stages(TaskAttempt& attempt, const std::vector<Plan>& plans) {
  const std::array<const char*, 4> stage_of = {"motion1_home_to_binview", "motion2_pregrasp",
                                               "motion3_postgrasp", "motion4_tote_to_home"};
  for (std::size_t i = 0; i < plans.size() && i < stage_of.size(); ++i) {
    attempt.stage_timings[stage_of[i]] = plans[i].plan_seconds;
  }
}

bool plans_complete(const std::vector<Plan>& plans) {
  if (plans.size() != 4) return false;
  return std::all_of(plans.begin(), plans.end(), [](const Plan& p) { return p.success; });
}

std::vector<Aabb> tote_boxes(const Eigen::Vector3d& tote_position) {
  const double half = 0.25;
  Aabb floor{tote_position - Eigen::Vector3d(half, half, 0.02),
             tote_position + Eigen::Vector3d(half, half, 0.0)};
  return {floor};
}

RigidTransform tote_camera_pose(const Eigen::Vector3d& tote_position) {
  RigidTransform pose;
  pose.rotation = frame_with_z(-Eigen::Vector3d::UnitZ());
  pose.translation = tote_position + Eigen::Vector3d(0.0, 0.0, 0.35);
  return pose;
}

struct RunContext {
  const OrchestratorConfig& config;
  RackModel rack;
  SequenceConfig sequence;
  ForestLibrary forests;
  std::uint64_t seed;

  RunContext(const OrchestratorConfig& cfg, std::uint64_t run_seed)
      : config(cfg),
        rack(rack_from_config(cfg.rack)),
        sequence(make_sequence_config(cfg.robot, rack, cfg.tote_position, kSuctionTubeLength)),
        forests(rack, cfg.perception),
        seed(run_seed) {
    sequence.step_size = cfg.step_size;
    sequence.goal_bias = cfg.goal_bias;
    sequence.max_samples = cfg.max_samples;
  }
};

// Shared render -> perceive -> calibrate -> voxelize front half of one
// attempt. render_boxes are what the camera sees; world_boxes are the
// planning obstacles. Returns false (with outcome set) on perception failure.
bool perceive_and_map(RunContext& ctx, TaskAttempt& attempt,
                      const std::vector<SceneObject>& objects, const std::string& item,
                      const RigidTransform& camera, const std::vector<Aabb>& render_boxes,
                      std::vector<Aabb> world_boxes, double noise_sigma_m,
                      std::uint64_t attempt_seed, SuctionTarget* target_base,
                      CollisionWorld* world) {
  const auto begin = Clock::now();
  RenderSettings rs;
  rs.depth_sigma_m = noise_sigma_m;
  rs.color_sigma = noise_sigma_m > 0.0 ? 0.02 : 0.0;
  rs.seed = derive_seed(attempt_seed, 1);
  RenderedBin rendered = render_scene_cloud(render_boxes, objects, camera, rs);
  rendered.camera_pose = camera;

  PerceptionSettings ps = ctx.config.perception;
  ps.detect.seed = derive_seed(attempt_seed, 2);
  try {
    PerceptionOutcome outcome = locate_suction_target(rendered, objects, item, ctx.forests, ps);
    RigidTransform extrinsics =
        estimate_camera_pose(camera, ctx.config.calibration_points,
                             ctx.config.calibration_noise_m, derive_seed(attempt_seed, 3));
    *target_base = to_base_frame(outcome.target, extrinsics);
    attempt.suction_point = *target_base;

    std::optional<Aabb> exclusion;
    if (const SceneObject* obj = intended_instance(objects, item, target_base->point)) {
      exclusion = object_aabb(*obj).inflated(0.01);
    }
    std::vector<Eigen::Vector3d> base_points;
    base_points.reserve(rendered.cloud.points.size());
    for (std::size_t i = 0; i < rendered.cloud.points.size(); ++i) {
      if (rendered.cloud.valid[i]) base_points.push_back(extrinsics.apply(rendered.cloud.points[i]));
    }
    VoxelGrid voxels = voxelize(base_points, ctx.config.voxel_size, exclusion);
    *world = CollisionWorld(std::move(world_boxes), std::move(voxels));
    attempt.stage_timings["object_recognition"] = seconds_since(begin);
    return true;
  } catch (const ItemAbsentError&) {
  } catch (const NoEvidenceError&) {
  } catch (const InvalidDepthError&) {
  }
  attempt.stage_timings["object_recognition"] = seconds_since(begin);
  attempt.outcome = AttemptOutcome::PerceptionFailed;
  return false;
}

RunReport finalize_report(std::vector<TaskAttempt> attempts, const ScoreTable& table) {
  RunReport report;
  report.attempts = std::move(attempts);
  report.total_score = score_run(report.attempts, table);
  double total_time = 0.0;
  int succeeded = 0;
  for (const TaskAttempt& attempt : report.attempts) {
    total_time += attempt.stage_timings.at("loop_total");
    if (attempt.outcome == AttemptOutcome::Succeeded) ++succeeded;
  }
  if (!report.attempts.empty()) {
    report.loop_time_mean = total_time / static_cast<double>(report.attempts.size());
  }
  if (total_time > 0.0) report.items_per_minute = succeeded / (total_time / 60.0);
  return report;
}

}  // namespace

nlohmann::json orchestrator_config_to_json(const OrchestratorConfig& config) {
  nlohmann::json j;
  j["rack"] = rack_config_to_json(config.rack);
  j["robot"] = nlohmann::json::parse(robot_model_to_json(config.robot));
  j["planner"] = {{"step_size", config.step_size},
                  {"goal_bias", config.goal_bias},
                  {"max_samples", config.max_samples},
                  {"voxel_size", config.voxel_size}};
  j["perception"] = {{"normals_k", config.perception.normals_k},
                     {"feature_k", config.perception.feature_k},
                     {"window", config.perception.window},
                     {"tree_count", config.perception.tree_count},
                     {"forest_depth", config.perception.forest_depth},
                     {"bandwidth_px", config.perception.bandwidth_px},
                     {"adaptivity", config.perception.adaptivity},
                     {"mode_floor_px", config.perception.mode_floor_px},
                     {"seed", config.perception.seed}};
  j["suction"] = {{"max_surface_distance_m", config.suction.max_surface_distance_m},
                  {"max_normal_angle_deg", config.suction.max_normal_angle_rad * 180.0 / M_PI},
                  {"cup_radius_m", config.suction.cup_radius_m}};
  j["score_table"] = {{"rewards", config.score_table.item_rewards},
                      {"wrong_item_penalty", config.score_table.wrong_item_penalty},
                      {"dropped_penalty", config.score_table.dropped_penalty}};
  j["tote_position"] = {config.tote_position.x(), config.tote_position.y(),
                        config.tote_position.z()};
  j["calibration"] = {{"points", config.calibration_points},
                      {"noise_m", config.calibration_noise_m}};
  return j;
}

OrchestratorConfig orchestrator_config_from_json(const nlohmann::json& j) {
  OrchestratorConfig config;
  try {
    if (j.contains("rack")) config.rack = rack_config_from_json(j.at("rack"));
    if (j.contains("robot")) config.robot = robot_model_from_json(j.at("robot").dump());
    if (j.contains("planner")) {
      const auto& p = j.at("planner");
      config.step_size = p.value("step_size", config.step_size);
      config.goal_bias = p.value("goal_bias", config.goal_bias);
      config.max_samples = p.value("max_samples", config.max_samples);
      config.voxel_size = p.value("voxel_size", config.voxel_size);
    }
    if (j.contains("perception")) {
      const auto& p = j.at("perception");
      config.perception.normals_k = p.value("normals_k", config.perception.normals_k);
      config.perception.feature_k = p.value("feature_k", config.perception.feature_k);
      config.perception.window = p.value("window", config.perception.window);
      config.perception.tree_count = p.value("tree_count", config.perception.tree_count);
      config.perception.forest_depth = p.value("forest_depth", config.perception.forest_depth);
      config.perception.bandwidth_px = p.value("bandwidth_px", config.perception.bandwidth_px);
      config.perception.adaptivity = p.value("adaptivity", config.perception.adaptivity);
      config.perception.mode_floor_px = p.value("mode_floor_px", config.perception.mode_floor_px);
      config.perception.seed = p.value("seed", config.perception.seed);
    }
    if (j.contains("suction")) {
      const auto& s = j.at("suction");
      config.suction.max_surface_distance_m =
          s.value("max_surface_distance_m", config.suction.max_surface_distance_m);
      if (s.contains("max_normal_angle_deg")) {
        config.suction.max_normal_angle_rad =
            s.at("max_normal_angle_deg").get<double>() * M_PI / 180.0;
      }
      config.suction.cup_radius_m = s.value("cup_radius_m", config.suction.cup_radius_m);
    }
    if (j.contains("score_table")) {
      const auto& s = j.at("score_table");
      if (s.contains("rewards")) {
        config.score_table.item_rewards.clear();
        for (const auto& [item, reward] : s.at("rewards").items()) {
          config.score_table.item_rewards[item] = reward.get<double>();
        }
      }
      config.score_table.wrong_item_penalty =
          s.value("wrong_item_penalty", config.score_table.wrong_item_penalty);
      config.score_table.dropped_penalty =
          s.value("dropped_penalty", config.score_table.dropped_penalty);
    }
    if (j.contains("tote_position")) {
      const auto& t = j.at("tote_position");
      config.tote_position =
          Eigen::Vector3d(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
    }
    if (j.contains("calibration")) {
      const auto& c = j.at("calibration");
      config.calibration_points = c.value("points", config.calibration_points);
      config.calibration_noise_m = c.value("noise_m", config.calibration_noise_m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  return config;
}

RunReport run_pick_task(const WorkOrder& order, const SceneLibrary& scenes,
                        const OrchestratorConfig& config, std::uint64_t seed) {
  if (order.mode != TaskMode::Pick) throw ConfigError("run_pick_task: order mode is not pick");
  for (const PickTarget& target : order.targets) {
    if (scenes.bins.find(bin_name_to_index(target.bin_name)) == scenes.bins.end()) {
      throw ConfigError("no scene for " + target.bin_name);
    }
  }

  RunContext ctx(config, seed);
  std::vector<TaskAttempt> attempts;
  std::map<std::string, int> occurrence;

  for (const PickTarget& target : order.targets) {
    TaskAttempt attempt;
    attempt.target = target;
    zero_stages(attempt);

    const auto json_begin = Clock::now();
    const int bin = bin_name_to_index(target.bin_name);
    const BinScene& scene = scenes.bins.at(bin);
    const std::string key = target.bin_name + "/" + target.item_id;
    const std::uint64_t attempt_seed = derive_seed(seed, fnv1a(key), occurrence[key]++);
    attempt.stage_timings["json_read"] = seconds_since(json_begin);

    const RigidTransform camera =
        scene.camera_pose ? *scene.camera_pose : bin_view_camera_pose(ctx.rack, bin);

    SuctionTarget target_base;
    CollisionWorld world;
    if (perceive_and_map(ctx, attempt, scene.objects, target.item_id, camera,
                         ctx.rack.wall_boxes, ctx.rack.wall_boxes, scene.noise_sigma_m,
                         attempt_seed, &target_base, &world)) {
      std::vector<Plan> plans = pick_motion_sequence(config.robot, ctx.rack, bin, target_base,
                                                     world, ctx.sequence,
                                                     derive_seed(attempt_seed, 4));
      record_motion_stages(attempt, plans);
      if (plans_complete(plans)) {
        attempt.outcome =
            simulate_suction(target_base, scene.objects, target.item_id, config.suction);
      } else {
        attempt.outcome = AttemptOutcome::PlanFailed;
      }
      attempt.plans = std::move(plans);
    }
    finish_loop_total(attempt);
    attempts.push_back(std::move(attempt));
  }
  return finalize_report(std::move(attempts), config.score_table);
}

RunReport run_stow_task(const WorkOrder& order, const SceneLibrary& scenes,
                        const OrchestratorConfig& config, std::uint64_t seed) {
  if (order.mode != TaskMode::Stow) throw ConfigError("run_stow_task: order mode is not stow");

  RunContext ctx(config, seed);
  std::vector<TaskAttempt> attempts;
  std::map<std::string, int> occurrence;

  std::array<int, RackModel::kBins> occupancy{};
  for (const auto& [bin, items] : order.bin_contents) {
    occupancy[bin_name_to_index(bin)] = static_cast<int>(items.size());
  }

  std::vector<SceneObject> tote = scenes.tote_objects;
  const std::vector<Aabb> boxes = tote_boxes(config.tote_position);
  const RigidTransform camera = tote_camera_pose(config.tote_position);

  std::deque<std::string> queue(order.stow_items.begin(), order.stow_items.end());
  std::size_t consecutive_failures = 0;
  while (!queue.empty() && consecutive_failures < queue.size()) {
    const std::string item = queue.front();
    queue.pop_front();

    TaskAttempt attempt;
    attempt.target = {"", item};
    zero_stages(attempt);

    const auto json_begin = Clock::now();
    const std::uint64_t attempt_seed = derive_seed(seed, fnv1a(item), occurrence[item]++);
    int dest = 0;
    for (int b = 1; b < RackModel::kBins; ++b) {
      if (occupancy[b] < occupancy[dest]) dest = b;
    }
    attempt.target.bin_name = bin_index_to_name(dest);
    attempt.stage_timings["json_read"] = seconds_since(json_begin);

    std::vector<Aabb> world_boxes = ctx.rack.wall_boxes;
    world_boxes.insert(world_boxes.end(), boxes.begin(), boxes.end());
    SuctionTarget target_base;
    CollisionWorld world;
    if (perceive_and_map(ctx, attempt, tote, item, camera, boxes, std::move(world_boxes),
                         scenes.tote_noise_sigma_m, attempt_seed, &target_base, &world)) {
      std::vector<Plan> plans =
          grasp_motion_sequence(config.robot, ctx.sequence, ctx.sequence.tote_view,
                                ctx.sequence.bin_view[dest], target_base, world,
                                derive_seed(attempt_seed, 4));
      record_motion_stages(attempt, plans);
      if (plans_complete(plans)) {
        attempt.outcome = simulate_suction(target_base, tote, item, config.suction);
      } else {
        attempt.outcome = AttemptOutcome::PlanFailed;
      }
      attempt.plans = std::move(plans);
    }

    if (attempt.outcome == AttemptOutcome::Succeeded) {
      ++occupancy[dest];
      // remove the stowed instance from the tote scene
      double best_dist = std::numeric_limits<double>::infinity();
      std::size_t best = tote.size();
      for (std::size_t i = 0; i < tote.size(); ++i) {
        if (tote[i].id != item) continue;
        double d = surface_distance(tote[i].shape, tote[i].pose, target_base.point);
        if (d < best_dist) {
          best_dist = d;
          best = i;
        }
      }
      if (best < tote.size()) tote.erase(tote.begin() + best);
      consecutive_failures = 0;
    } else if (attempt.outcome == AttemptOutcome::PerceptionFailed) {
      queue.push_back(item);  // maybe occluded; retry after others
      ++consecutive_failures;
    } else {
      consecutive_failures = 0;  // consumed the target; the queue still moved
    }

    finish_loop_total(attempt);
    attempts.push_back(std::move(attempt));
  }
  return finalize_report(std::move(attempts), config.score_table);
}

const std::vector<std::string>& stage_taxonomy() { return kStages; }

void emit_metrics(const RunReport& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::string csv_path = out_dir + "/metrics.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);

  csv << "attempt,bin,item,outcome";
  for (const std::string& stage : kStages) csv << ',' << stage;
  csv << '\n';
  csv.precision(6);
  csv << std::fixed;

  std::map<std::string, double> sums;
  for (std::size_t i = 0; i < report.attempts.size(); ++i) {
    const TaskAttempt& attempt = report.attempts[i];
    csv << i << ',' << attempt.target.bin_name << ',' << attempt.target.item_id << ','
        << to_string(attempt.outcome);
    for (const std::string& stage : kStages) {
      const double v = attempt.stage_timings.count(stage) ? attempt.stage_timings.at(stage) : 0.0;
      sums[stage] += v;
      csv << ',' << v;
    }
    csv << '\n';
  }
  csv << "mean,,,";
  const double n = report.attempts.empty() ? 1.0 : static_cast<double>(report.attempts.size());
  for (const std::string& stage : kStages) csv << ',' << sums[stage] / n;
  csv << '\n';
  if (!csv.good()) throw std::runtime_error("cannot write " + csv_path);
  csv.close();

  int succeeded = 0;
  for (const TaskAttempt& attempt : report.attempts) {
    if (attempt.outcome == AttemptOutcome::Succeeded) ++succeeded;
  }
  nlohmann::json summary{{"attempts", report.attempts.size()},
                         {"succeeded", succeeded},
                         {"total_score", report.total_score},
                         {"items_per_minute", report.items_per_minute},
                         {"loop_time_mean", report.loop_time_mean}};
  const std::string json_path = out_dir + "/summary.json";
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot write " + json_path);
  js << summary.dump(2) << '\n';
  if (!js.good()) throw std::runtime_error("cannot write " + json_path);
}

SceneLibrary make_scene_library(const WorkOrder& order, const RackModel& rack,
                                const Eigen::Vector3d& tote_position, std::uint64_t seed,
                                double noise_sigma_m) {
  SceneLibrary scenes;
  for (const auto& [bin_name, items] : order.bin_contents) {
    const int bin = bin_name_to_index(bin_name);
    BinScene scene;
    scene.noise_sigma_m = noise_sigma_m;
    Rng rng(derive_seed(seed, 0xb1, bin));
    // Shelf-stocked items face the aisle to within ~15 degrees; anything
    // more oblique would force the suction tube through a neighbouring wall.
    std::uniform_real_distribution<double> yaw_dist(-0.26, 0.26);

    // Requested items go in the front row where the bin-view camera can see
    // them; the rest fill the deeper rows as clutter.
    std::vector<std::string> staged(items);
    std::stable_partition(staged.begin(), staged.end(), [&](const std::string& id) {
      return std::any_of(order.targets.begin(), order.targets.end(),
                         [&](const PickTarget& t) {
                           return t.bin_name == bin_name && t.item_id == id;
                         });
    });

    // Inner lateral span of the bin cell (gridline-to-gridline minus the
    // half wall on each side) with a little clearance off the walls.
    constexpr double kClearance = 0.006;
    double u_lo = std::numeric_limits<double>::infinity();
    double u_hi = -std::numeric_limits<double>::infinity();
    for (const Eigen::Vector2d& corner : rack.bin_corners[bin]) {
      u_lo = std::min(u_lo, corner.x());
      u_hi = std::max(u_hi, corner.x());
    }
    u_lo += 0.5 * rack.config.wall_thickness_m + kClearance;
    u_hi -= 0.5 * rack.config.wall_thickness_m + kClearance;
    const double centre_u = rack.bin_centers_2d[bin].x();
    const double bin_depth = rack.config.depth_m;

    for (std::size_t i = 0; i < staged.size(); ++i) {
      const ItemSpec& spec = item_spec(staged[i]);
      double yaw = yaw_dist(rng);

      double half_w = 0.0;
      double half_d = 0.0;
      double depth_m = 0.0;
      double lo = 0.0;
      double hi = 0.0;
      for (int relax = 0;; ++relax) {
        // Yawed footprint half-extents: lateral (along the shelf face) and
        // depth (into the bin).
        switch (spec.shape.kind) {
          case ShapeKind::Box: {
            const double c = std::abs(std::cos(yaw));
            const double s = std::abs(std::sin(yaw));
            half_w = 0.5 * (spec.shape.extents.y() * c + spec.shape.extents.x() * s);
            half_d = 0.5 * (spec.shape.extents.x() * c + spec.shape.extents.y() * s);
            break;
          }
          case ShapeKind::Cylinder:
          case ShapeKind::Sphere:
            half_w = half_d = spec.shape.radius;
            break;
        }

        // One item per depth row, front to back, each kept fully inside the
        // bin cavity.
        const double row_fraction = 0.35 + 0.30 * static_cast<double>(i % 3);
        depth_m = std::clamp(row_fraction * bin_depth, half_d + kClearance,
                             bin_depth - half_d - kClearance);

        // Footprint off the walls...
        lo = u_lo + half_w - centre_u;
        hi = u_hi - half_w - centre_u;
        // ...and room for the suction tube: it reaches a yawed face at an
        // angle, so where it crosses the bin mouth it is offset sideways
        // from the contact point. Shrink the span on that side so the
        // entry line stays off the walls; flatten the yaw if the item is
        // too wide to leave room.
        const double swing =
            std::tan(std::abs(yaw)) * (depth_m - half_d + 0.03) + 0.018;
        if (yaw >= 0.0) {
          lo += swing;
        } else {
          hi -= swing;
        }
        if (lo <= hi || relax >= 3) break;
        yaw *= 0.5;
      }

      double u = 0.0;
      if (lo < hi) {
        // Rows alternate left/right so neighbouring rows stay apart.
        if (staged.size() > 1) {
          const double mid = 0.5 * (lo + hi);
          if (i % 2 == 0) {
            hi = mid;
          } else {
            lo = mid;
          }
        }
        u = std::uniform_real_distribution<double>(lo, hi)(rng);
      } else {
        u = std::clamp(0.5 * (lo + hi), u_lo + half_w - centre_u, u_hi - half_w - centre_u);
      }

      scene.objects.push_back(make_object(
          staged[i], upright_item_pose(rack, bin, spec.shape, u, depth_m / bin_depth, yaw)));
    }
    scenes.bins[bin] = std::move(scene);
  }

  scenes.tote_noise_sigma_m = noise_sigma_m;
  Rng rng(derive_seed(seed, 0x707e));
  std::uniform_real_distribution<double> yaw_dist(-0.26, 0.26);
  for (std::size_t i = 0; i < order.tote_contents.size(); ++i) {
    const ItemSpec& spec = item_spec(order.tote_contents[i]);
    // Tote items are picked from above, so boxes lie on their largest face
    // (local x, the thin depth axis, turned vertical); cylinders and
    // spheres rest naturally.
    double half_height = 0.0;
    Eigen::Matrix3d base = Eigen::Matrix3d::Identity();
    switch (spec.shape.kind) {
      case ShapeKind::Box:
        half_height = 0.5 * spec.shape.extents.x();
        base.col(0) = Eigen::Vector3d::UnitZ();
        base.col(1) = Eigen::Vector3d::UnitX();
        base.col(2) = Eigen::Vector3d::UnitY();
        break;
      case ShapeKind::Cylinder:
        half_height = 0.5 * spec.shape.height;
        break;
      case ShapeKind::Sphere:
        half_height = spec.shape.radius;
        break;
    }
    RigidTransform pose;
    pose.rotation =
        Eigen::AngleAxisd(yaw_dist(rng), Eigen::Vector3d::UnitZ()).toRotationMatrix() * base;
    const int col = static_cast<int>(i) % 3;
    const int row = (static_cast<int>(i) / 3) % 4;
    pose.translation = tote_position + Eigen::Vector3d(-0.14 + 0.14 * col, -0.165 + 0.11 * row,
                                                       half_height);
    scenes.tote_objects.push_back(make_object(order.tote_contents[i], pose));
  }
  return scenes;
}

nlohmann::json scene_library_to_json(const SceneLibrary& scenes) {
  nlohmann::json bins = nlohmann::json::object();
  for (const auto& [bin, scene] : scenes.bins) {
    bins[bin_index_to_name(bin)] = bin_scene_to_json(scene);
  }
  nlohmann::json tote_objects = nlohmann::json::array();
  for (const SceneObject& obj : scenes.tote_objects) tote_objects.push_back(scene_object_to_json(obj));
  return nlohmann::json{{"bins", bins},
                        {"tote", {{"objects", tote_objects},
                                  {"noise_sigma_m", scenes.tote_noise_sigma_m}}}};
}

SceneLibrary scene_library_from_json(const nlohmann::json& j) {
  SceneLibrary scenes;
  if (j.contains("bins")) {
    for (const auto& [name, scene] : j.at("bins").items()) {
      scenes.bins[bin_name_to_index(name)] = bin_scene_from_json(scene);
    }
  }
  if (j.contains("tote")) {
    for (const auto& obj : j.at("tote").at("objects")) {
      scenes.tote_objects.push_back(scene_object_from_json(obj));
    }
    scenes.tote_noise_sigma_m = j.at("tote").value("noise_sigma_m", 0.0);
  }
  return scenes;
}

}  // namespace pickstow
