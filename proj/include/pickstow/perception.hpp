#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "pickstow/geometry.hpp"
#include "pickstow/rack_geometry.hpp"
#include "pickstow/scene.hpp"

namespace pickstow {

struct ItemAbsentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoEvidenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidDepthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CameraIntrinsics {
  int width = 160;
  int height = 120;
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;

  static CameraIntrinsics from_fov(int width, int height, double hfov_rad);
  // Unit ray through the pixel center, camera frame (+z forward).
  Eigen::Vector3d pixel_ray(int x, int y) const;
};

// Organized RGBD cloud in the camera frame. Pixels whose ray hit nothing
// keep a zero point with valid = 0 so coordinates stay finite.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> colors;
  std::vector<std::uint8_t> valid;
  std::optional<std::pair<int, int>> organized_shape;  // (width, height)

  int width() const { return organized_shape ? organized_shape->first : 0; }
  int height() const { return organized_shape ? organized_shape->second : 0; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width() + x;
  }
};

struct PixelRect {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive bounds

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool empty() const { return x1 < x0 || y1 < y0; }
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  PixelRect clipped(int image_width, int image_height) const;
};

struct Detection {
  std::string item_id;
  PixelRect box;
  double score = 0.0;
};

inline constexpr int kLabelNone = -1;
inline constexpr int kLabelWall = -2;

struct RenderedBin {
  PointCloud cloud;
  std::vector<int> labels;  // kLabelNone, kLabelWall, or object index
  RigidTransform camera_pose;  // camera -> robot base
  CameraIntrinsics intrinsics;
};

struct RenderSettings {
  int width = 160;
  int height = 120;
  double hfov_deg = 58.0;
  double depth_sigma_m = 0.002;
  double color_sigma = 0.02;
  std::uint64_t seed = 0;

  static RenderSettings noiseless() {
    RenderSettings s;
    s.depth_sigma_m = 0.0;
    s.color_sigma = 0.0;
    return s;
  }
};

// Camera centered in front of the bin at `standoff_m` outside the rack
// plane, optical axis along the plane normal into the bin.
RigidTransform bin_view_camera_pose(const RackModel& rack, int bin_index,
                                    double standoff_m = 0.25);

RenderedBin render_bin_cloud(const RackModel& rack, int bin_index,
                             const std::vector<SceneObject>& objects,
                             const RigidTransform& camera_pose, const RenderSettings& settings);

/// Same ray-cast renderer against an arbitrary box set (labeled kLabelWall)
/// instead of a rack; used for tote views.
RenderedBin render_scene_cloud(const std::vector<Aabb>& boxes,
                               const std::vector<SceneObject>& objects,
                               const RigidTransform& camera_pose, const RenderSettings& settings);

struct DetectSettings {
  double inflation = 0.25;  // fraction of box size added on each side
  double jitter_px = 2.0;
  double score_mean = 0.85;
  double score_sigma = 0.05;
  std::uint64_t seed = 7;
};

// Ground-truth silhouette box of the most visible instance of query_item,
// inflated and jittered to emulate a loose learned detector. Throws
// ItemAbsentError when the item is not in the scene or not visible.
Detection detect_stub(const RenderedBin& rendered, const std::vector<SceneObject>& objects,
                      const std::string& query_item, const DetectSettings& settings);

// Per-point PCA normals over k nearest neighbors (radius-capped at 5 cm),
// flipped toward the camera origin. Points with fewer than 3 neighbors get
// a zero normal, which downstream histogram code skips.
std::vector<Eigen::Vector3d> estimate_normals(const PointCloud& cloud, int k);

struct FeatureVector {
  static constexpr int kShapeBins = 15;
  static constexpr int kHueBins = 16;
  static constexpr int kGrayBins = 6;
  static constexpr int kSize = kShapeBins + kHueBins + kGrayBins;

  std::array<double, kSize> values{};
};

// 15-bin histogram of angles between neighboring normals on [0, pi/2],
// 16-bin hue histogram, 6-bin gray histogram, each block L1-normalized.
FeatureVector extract_features(const PointCloud& cloud,
                               const std::vector<Eigen::Vector3d>& normals,
                               const std::vector<int>& region, int k = 12);

struct TreeNode {
  int feature = -1;       // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double probability = 0.0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  double predict(const FeatureVector& x) const;
};

struct RandomForest {
  std::vector<DecisionTree> trees;
  int max_depth = 30;
  double predict(const FeatureVector& x) const;
};

RandomForest train_forest(const std::vector<FeatureVector>& positives,
                          const std::vector<FeatureVector>& negatives, int tree_count = 100,
                          int max_depth = 30, std::uint64_t seed = 1);

struct ProbabilityMap {
  PixelRect roi;
  std::vector<double> values;        // row-major within roi
  std::vector<std::uint8_t> flags;   // 0 where features were unavailable

  double at(int x, int y) const { return values[index(x, y)]; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y - roi.y0) * roi.width() + (x - roi.x0);
  }
};

ProbabilityMap classify_pixels(const RandomForest& forest, const RenderedBin& rendered,
                               const std::vector<Eigen::Vector3d>& normals, const Detection& roi,
                               int window = 7, int feature_k = 12);

struct ModeResult {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double confidence = 0.0;
};

// Probability-weighted flat-kernel mean shift over pixels above 0.5,
// starting from their weighted mean; the bandwidth decays by `adaptivity`
// per iteration down to floor_px. Throws NoEvidenceError when nothing
// clears the threshold.
ModeResult mean_shift_mode(const ProbabilityMap& map, double bandwidth, double adaptivity = 0.9,
                           double floor_px = 5.0);

struct SuctionTarget {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  double confidence = 0.0;
};

SuctionTarget suction_target(const PointCloud& cloud, const std::vector<Eigen::Vector3d>& normals,
                             const Eigen::Vector2d& mode_pixel, const std::vector<int>& region,
                             double confidence = 1.0);

// Pose of an item standing on the bin floor: local +z along rack-up, yawed
// about it, centered at the bin's horizontal middle plus u_offset, pushed
// depth_fraction of the bin depth past the rack plane.
RigidTransform upright_item_pose(const RackModel& rack, int bin_index, const Shape& shape,
                                 double u_offset, double depth_fraction, double yaw);

struct PerceptionSettings {
  DetectSettings detect;
  int normals_k = 16;
  int feature_k = 12;
  int window = 7;
  int tree_count = 100;
  int forest_depth = 30;
  double bandwidth_px = 25.0;
  double adaptivity = 0.9;
  double mode_floor_px = 5.0;
  std::uint64_t seed = 2016;
};

// One-vs-all forest per catalog item, trained on canonical renders of the
// item (positives) against rack walls and other items (negatives), built
// lazily and cached. Deterministic given the settings seed.
class ForestLibrary {
 public:
  ForestLibrary(RackModel rack, PerceptionSettings settings);

  const RandomForest& forest_for(const std::string& item);

 private:
  struct ItemFeatures {
    std::vector<FeatureVector> pixel_features;
  };

  const ItemFeatures& features_for(const std::string& item);

  RackModel rack_;
  PerceptionSettings settings_;
  int training_bin_ = 4;
  std::map<std::string, ItemFeatures> feature_cache_;
  std::map<std::string, RandomForest> forest_cache_;
  std::vector<FeatureVector> wall_features_;
  bool wall_ready_ = false;
};

struct PerceptionOutcome {
  SuctionTarget target;  // camera frame
  Detection detection;
  ModeResult mode;
  int mode_index = -1;   // linear index of the pixel the target came from
};

// Full verification pipeline on one rendered bin: detect -> classify ->
// mean shift -> suction target, retrying up to 3 nearby modes when the
// chosen pixel has no usable depth or normal.
PerceptionOutcome locate_suction_target(const RenderedBin& rendered,
                                        const std::vector<SceneObject>& objects,
                                        const std::string& query_item, ForestLibrary& forests,
                                        const PerceptionSettings& settings);

std::string cloud_to_ascii(const PointCloud& cloud);
std::string probability_map_to_pgm(const ProbabilityMap& map);

struct BinScene {
  std::vector<SceneObject> objects;
  std::optional<RigidTransform> camera_pose;
  double noise_sigma_m = 0.002;
};

nlohmann::json bin_scene_to_json(const BinScene& scene);
BinScene bin_scene_from_json(const nlohmann::json& j);

}  // namespace pickstow
