#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pickstow/orchestrator.hpp"

namespace {

using namespace pickstow;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out.good()) throw std::runtime_error("cannot write " + path);
}

OrchestratorConfig load_config(const std::string& path) {
  if (path.empty()) return OrchestratorConfig{};
  return orchestrator_config_from_json(nlohmann::json::parse(read_file(path)));
}

SceneLibrary load_scenes(const std::string& path) {
  std::string file = path;
  if (std::filesystem::is_directory(path)) file = path + "/scenes.json";
  return scene_library_from_json(nlohmann::json::parse(read_file(file)));
}

JointConfig parse_joints(const std::string& text) {
  JointConfig q;
  std::stringstream ss(text);
  std::string token;
  int i = 0;
  while (std::getline(ss, token, ',')) {
    if (i >= kNumJoints) throw std::runtime_error("expected 6 joint values, got more");
    q[i++] = std::stod(token);
  }
  if (i != kNumJoints) {
    throw std::runtime_error("expected 6 joint values, got " + std::to_string(i));
  }
  return q;
}

int cmd_run(const std::string& order_path, const std::string& scenes_path,
            const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
  WorkOrder order = parse_work_order(read_file(order_path));
  OrchestratorConfig config = load_config(config_path);
  SceneLibrary scenes = load_scenes(scenes_path);

  RunReport report = order.mode == TaskMode::Pick ? run_pick_task(order, scenes, config, seed)
                                                  : run_stow_task(order, scenes, config, seed);
  emit_metrics(report, out_dir);

  int succeeded = 0;
  for (const TaskAttempt& attempt : report.attempts) {
    if (attempt.outcome == AttemptOutcome::Succeeded) ++succeeded;
  }
  std::cout << "attempts: " << report.attempts.size() << "\nsucceeded: " << succeeded
            << "\nscore: " << report.total_score
            << "\nitems_per_minute: " << report.items_per_minute << "\nmetrics: " << out_dir
            << "/metrics.csv\n";
  return 0;
}

int cmd_calibrate(const std::string& pairs_path, bool sweep, const std::string& out_path) {
  std::ostringstream out;
  if (!pairs_path.empty()) {
    PointPairSet pairs = point_pair_set_from_json(nlohmann::json::parse(read_file(pairs_path)));
    CalibrationResult result = estimate_rigid_transform(pairs);
    nlohmann::json j{{"transform", transform_to_json(result.transform)},
                     {"rms_error_m", result.rms_error}};
    out << j.dump(2) << '\n';
  }
  if (sweep) {
    std::vector<int> sizes = {3, 4, 5, 6, 8, 10, 12, 16, 24};
    out << sweep_csv(rms_vs_sample_size(NoiseModel{}, sizes));
  }
  if (pairs_path.empty() && !sweep) {
    std::cerr << "calibrate: pass --pairs and/or --sweep\n";
    return 1;
  }
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    write_file(out_path, out.str());
  }
  return 0;
}

int cmd_plan(const std::string& world_path, const std::string& start_text,
             const std::string& goal_text, std::uint64_t seed, const std::string& out_path) {
  OrchestratorConfig config;
  VoxelGrid voxels;
  if (!world_path.empty()) {
    nlohmann::json j = nlohmann::json::parse(read_file(world_path));
    if (j.contains("rack")) config.rack = rack_config_from_json(j.at("rack"));
    if (j.contains("points")) {
      std::vector<Eigen::Vector3d> points;
      for (const auto& p : j.at("points")) {
        points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
      }
      voxels = voxelize(points, j.value("voxel_size", 0.01));
    }
  }
  RackModel rack = rack_from_config(config.rack);
  CollisionWorld world(rack.wall_boxes, std::move(voxels));

  PlanRequest request;
  request.start = parse_joints(start_text);
  request.goal_config = parse_joints(goal_text);
  request.world = &world;
  request.seed = seed;
  Plan plan = plan_rrt(config.robot, request);
  plan.segment_label = "plan";

  std::ostringstream out;
  out << "# success " << (plan.success ? 1 : 0) << " samples " << plan.samples_used << "\n"
      << plans_to_csv({plan});
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    write_file(out_path, out.str());
  }
  return 0;
}

int cmd_perceive(const std::string& scene_path, const std::string& item, int bin,
                 const std::string& config_path, const std::string& out_dir) {
  OrchestratorConfig config = load_config(config_path);
  RackModel rack = rack_from_config(config.rack);
  BinScene scene = bin_scene_from_json(nlohmann::json::parse(read_file(scene_path)));

  RigidTransform camera =
      scene.camera_pose ? *scene.camera_pose : bin_view_camera_pose(rack, bin);
  RenderSettings rs;
  rs.depth_sigma_m = scene.noise_sigma_m;
  rs.color_sigma = scene.noise_sigma_m > 0.0 ? 0.02 : 0.0;
  RenderedBin rendered = render_bin_cloud(rack, bin, scene.objects, camera, rs);

  ForestLibrary forests(rack, config.perception);
  nlohmann::json result;
  try {
    PerceptionOutcome outcome =
        locate_suction_target(rendered, scene.objects, item, forests, config.perception);
    result = {{"item", item},
              {"point_camera", {outcome.target.point.x(), outcome.target.point.y(),
                                outcome.target.point.z()}},
              {"normal_camera", {outcome.target.normal.x(), outcome.target.normal.y(),
                                 outcome.target.normal.z()}},
              {"confidence", outcome.target.confidence},
              {"mode_pixel", {outcome.mode.pixel.x(), outcome.mode.pixel.y()}},
              {"detection_score", outcome.detection.score}};
  } catch (const std::runtime_error& e) {
    result = {{"item", item}, {"error", e.what()}};
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/cloud.xyz", cloud_to_ascii(rendered.cloud));
    result["cloud"] = out_dir + "/cloud.xyz";
  }
  std::cout << result.dump(2) << '\n';
  return 0;
}

int cmd_gen_scenes(const std::string& order_path, const std::string& config_path,
                   std::uint64_t seed, double noise, const std::string& out_path) {
  WorkOrder order = parse_work_order(read_file(order_path));
  OrchestratorConfig config = load_config(config_path);
  RackModel rack = rack_from_config(config.rack);
  SceneLibrary scenes = make_scene_library(order, rack, config.tote_position, seed, noise);
  write_file(out_path, scene_library_to_json(scenes).dump(2) + "\n");
  std::cout << "wrote " << out_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated pick-and-stow workcell"};
  app.require_subcommand(1);

  std::string order_path, scenes_path, config_path, out_dir = "out";
  std::uint64_t seed = 2016;
  auto* run = app.add_subcommand("run", "Execute a pick or stow work order");
  run->add_option("--order", order_path, "Work order JSON")->required();
  run->add_option("--scenes", scenes_path, "Scene library JSON (or directory)")->required();
  run->add_option("--config", config_path, "Run configuration JSON");
  run->add_option("--seed", seed, "Run seed");
  run->add_option("--out", out_dir, "Output directory for metrics");

  std::string pairs_path, calib_out;
  bool sweep = false;
  auto* calibrate = app.add_subcommand("calibrate", "Rigid camera-to-base calibration");
  calibrate->add_option("--pairs", pairs_path, "Point-pair set JSON");
  calibrate->add_flag("--sweep", sweep, "Print the RMS-vs-N synthetic sweep");
  calibrate->add_option("--out", calib_out, "Write output here instead of stdout");

  std::string world_path, start_text, goal_text, plan_out;
  std::uint64_t plan_seed = 0;
  auto* plan = app.add_subcommand("plan", "Plan a joint-space path with RRT");
  plan->add_option("--world", world_path, "World JSON (rack config + optional points)");
  plan->add_option("--start", start_text, "Start joints q1,...,q6 (rad)")->required();
  plan->add_option("--goal", goal_text, "Goal joints q1,...,q6 (rad)")->required();
  plan->add_option("--seed", plan_seed, "Planner seed");
  plan->add_option("--out", plan_out, "Write the plan CSV here instead of stdout");

  std::string scene_path, item, perceive_config, perceive_out;
  int bin = 4;
  auto* perceive = app.add_subcommand("perceive", "Locate a suction target in a bin scene");
  perceive->add_option("--scene", scene_path, "Bin scene JSON")->required();
  perceive->add_option("--item", item, "Catalog item id to find")->required();
  perceive->add_option("--bin", bin, "Bin index (0-11)");
  perceive->add_option("--config", perceive_config, "Run configuration JSON");
  perceive->add_option("--out", perceive_out, "Directory for cloud/debug dumps");

  std::string gen_order, gen_config, gen_out = "scenes.json";
  std::uint64_t gen_seed = 2016;
  double gen_noise = 0.0;
  auto* gen = app.add_subcommand("gen-scenes", "Generate a scene library for an order");
  gen->add_option("--order", gen_order, "Work order JSON")->required();
  gen->add_option("--config", gen_config, "Run configuration JSON");
  gen->add_option("--seed", gen_seed, "Placement seed");
  gen->add_option("--noise", gen_noise, "Depth noise sigma (m)");
  gen->add_option("--out", gen_out, "Output scene library path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(order_path, scenes_path, config_path, seed, out_dir);
    if (calibrate->parsed()) return cmd_calibrate(pairs_path, sweep, calib_out);
    if (plan->parsed()) return cmd_plan(world_path, start_text, goal_text, plan_seed, plan_out);
    if (perceive->parsed()) {
      return cmd_perceive(scene_path, item, bin, perceive_config, perceive_out);
    }
    if (gen->parsed()) return cmd_gen_scenes(gen_order, gen_config, gen_seed, gen_noise, gen_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
