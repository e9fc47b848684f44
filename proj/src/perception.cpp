#include "pickstow/perception.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pickstow/rng.hpp"

namespace pickstow {

namespace {

constexpr double kNeighborRadius = 0.05;  // m, normal-estimation fallback cap

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Hue in [0,1) from max/min decomposition; false when saturation is zero.
bool rgb_to_hue(const Eigen::Vector3d& rgb, double* hue) {
  double maxc = rgb.maxCoeff();
  double minc = rgb.minCoeff();
  double chroma = maxc - minc;
  if (chroma < 1e-9 || maxc < 1e-9) return false;
  double h;
  if (maxc == rgb.x()) {
    h = std::fmod((rgb.y() - rgb.z()) / chroma, 6.0);
    if (h < 0.0) h += 6.0;
  } else if (maxc == rgb.y()) {
    h = (rgb.z() - rgb.x()) / chroma + 2.0;
  } else {
    h = (rgb.x() - rgb.y()) / chroma + 4.0;
  }
  *hue = h / 6.0;
  return true;
}

double rgb_to_gray(const Eigen::Vector3d& rgb) {
  return 0.299 * rgb.x() + 0.587 * rgb.y() + 0.114 * rgb.z();
}

// k nearest indices to `query` among candidates (3D distance, radius cap),
// excluding exclude_index; candidates must point into cloud-like storage.
std::vector<int> k_nearest(const std::vector<Eigen::Vector3d>& points,
                           const std::vector<int>& candidates, const Eigen::Vector3d& query,
                           int k, double max_radius, int exclude_index) {
  std::vector<std::pair<double, int>> scored;
  scored.reserve(candidates.size());
  const double r2 = max_radius * max_radius;
  for (int idx : candidates) {
    if (idx == exclude_index) continue;
    double d2 = (points[idx] - query).squaredNorm();
    if (d2 <= r2) scored.emplace_back(d2, idx);
  }
  int keep = std::min<int>(k, static_cast<int>(scored.size()));
  std::partial_sort(scored.begin(), scored.begin() + keep, scored.end());
  std::vector<int> out;
  out.reserve(keep);
  for (int i = 0; i < keep; ++i) out.push_back(scored[i].second);
  return out;
}

Eigen::Vector3d pca_normal(const std::vector<Eigen::Vector3d>& points,
                           const std::vector<int>& neighborhood) {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (int idx : neighborhood) mean += points[idx];
  mean /= static_cast<double>(neighborhood.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int idx : neighborhood) {
    Eigen::Vector3d d = points[idx] - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  return eig.eigenvectors().col(0);
}

struct Primitive {
  int label = kLabelNone;
  bool is_wall = false;
  Aabb box;                  // walls
  const SceneObject* object = nullptr;
};

}  // namespace

CameraIntrinsics CameraIntrinsics::from_fov(int width, int height, double hfov_rad) {
  if (width < 2 || height < 2) throw std::invalid_argument("camera needs at least 2x2 pixels");
  if (!(hfov_rad > 0.0) || !(hfov_rad < M_PI)) {
    throw std::invalid_argument("horizontal field of view must be in (0, pi)");
  }
  CameraIntrinsics c;
  c.width = width;
  c.height = height;
  c.fx = (width / 2.0) / std::tan(hfov_rad / 2.0);
  c.fy = c.fx;
  c.cx = width / 2.0;
  c.cy = height / 2.0;
  return c;
}

Eigen::Vector3d CameraIntrinsics::pixel_ray(int x, int y) const {
  Eigen::Vector3d d((x + 0.5 - cx) / fx, (y + 0.5 - cy) / fy, 1.0);
  return d.normalized();
}

PixelRect PixelRect::clipped(int image_width, int image_height) const {
  PixelRect r;
  r.x0 = std::max(0, x0);
  r.y0 = std::max(0, y0);
  r.x1 = std::min(image_width - 1, x1);
  r.y1 = std::min(image_height - 1, y1);
  return r;
}

RigidTransform bin_view_camera_pose(const RackModel& rack, int bin_index, double standoff_m) {
  if (bin_index < 0 || bin_index >= RackModel::kBins) {
    throw std::out_of_range("bin index must be in [0, 12)");
  }
  const RackPlane& plane = rack.config.plane;
  Eigen::Vector3d n = plane.normal();
  RigidTransform pose;
  pose.rotation.col(0) = plane.e_u;
  pose.rotation.col(1) = plane.e_v;
  pose.rotation.col(2) = n;
  pose.translation = rack.bin_centers_3d[bin_index] - standoff_m * n;
  return pose;
}

RenderedBin render_bin_cloud(const RackModel& rack, int bin_index,
                             const std::vector<SceneObject>& objects,
                             const RigidTransform& camera_pose, const RenderSettings& settings) {
  if (bin_index < 0 || bin_index >= RackModel::kBins) {
    throw std::out_of_range("bin index must be in [0, 12)");
  }
  return render_scene_cloud(rack.wall_boxes, objects, camera_pose, settings);
}

RenderedBin render_scene_cloud(const std::vector<Aabb>& boxes,
                               const std::vector<SceneObject>& objects,
                               const RigidTransform& camera_pose, const RenderSettings& settings) {
  RenderedBin out;
  out.camera_pose = camera_pose;
  out.intrinsics =
      CameraIntrinsics::from_fov(settings.width, settings.height, settings.hfov_deg * M_PI / 180.0);

  std::vector<Primitive> prims;
  for (const Aabb& box : boxes) {
    Primitive p;
    p.label = kLabelWall;
    p.is_wall = true;
    p.box = box;
    prims.push_back(p);
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    Primitive p;
    p.label = static_cast<int>(i);
    p.object = &objects[i];
    prims.push_back(p);
  }

  const std::size_t n_pixels = static_cast<std::size_t>(settings.width) * settings.height;
  out.cloud.points.assign(n_pixels, Eigen::Vector3d::Zero());
  out.cloud.colors.assign(n_pixels, Eigen::Vector3d::Zero());
  out.cloud.valid.assign(n_pixels, 0);
  out.cloud.organized_shape = {settings.width, settings.height};
  out.labels.assign(n_pixels, kLabelNone);

  const Eigen::Vector3d wall_color(0.55, 0.53, 0.50);
  Rng rng(settings.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Eigen::Vector3d origin = camera_pose.translation;
  for (int y = 0; y < settings.height; ++y) {
    for (int x = 0; x < settings.width; ++x) {
      const std::size_t idx = out.cloud.index(x, y);
      Eigen::Vector3d dir_cam = out.intrinsics.pixel_ray(x, y);
      Eigen::Vector3d dir = camera_pose.rotation * dir_cam;

      double best_t = std::numeric_limits<double>::infinity();
      int best_label = kLabelNone;
      const Primitive* best_prim = nullptr;
      for (const Primitive& prim : prims) {
        std::optional<RayHit> hit = prim.is_wall
                                        ? ray_aabb_hit(origin, dir, prim.box)
                                        : ray_shape(origin, dir, prim.object->shape,
                                                    prim.object->pose);
        if (hit && hit->t < best_t) {
          best_t = hit->t;
          best_label = prim.label;
          best_prim = &prim;
        }
      }
      if (!best_prim) continue;

      double t = best_t;
      if (settings.depth_sigma_m > 0.0) t += settings.depth_sigma_m * gauss(rng);
      out.cloud.points[idx] = t * dir_cam;
      Eigen::Vector3d color = best_prim->is_wall ? wall_color : best_prim->object->base_color;
      if (settings.color_sigma > 0.0) {
        for (int c = 0; c < 3; ++c) color[c] = clamp01(color[c] + settings.color_sigma * gauss(rng));
      }
      out.cloud.colors[idx] = color;
      out.cloud.valid[idx] = 1;
      out.labels[idx] = best_label;
    }
  }
  return out;
}

Detection detect_stub(const RenderedBin& rendered, const std::vector<SceneObject>& objects,
                      const std::string& query_item, const DetectSettings& settings) {
  std::vector<int> instances;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].id == query_item) instances.push_back(static_cast<int>(i));
  }
  if (instances.empty()) {
    throw ItemAbsentError("detect_stub: item not in scene: " + query_item);
  }

  const int width = rendered.cloud.width();
  const int height = rendered.cloud.height();
  int best_instance = -1;
  int best_count = 0;
  for (int inst : instances) {
    int count = static_cast<int>(std::count(rendered.labels.begin(), rendered.labels.end(), inst));
    if (count > best_count) {
      best_count = count;
      best_instance = inst;
    }
  }
  if (best_instance < 0) {
    throw ItemAbsentError("detect_stub: item fully occluded: " + query_item);
  }

  PixelRect box{width, height, -1, -1};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (rendered.labels[rendered.cloud.index(x, y)] != best_instance) continue;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x);
      box.y1 = std::max(box.y1, y);
    }
  }

  const PixelRect silhouette = box;
  Rng rng(settings.seed);
  const int grow_x = static_cast<int>(std::lround(settings.inflation * box.width()));
  const int grow_y = static_cast<int>(std::lround(settings.inflation * box.height()));
  box.x0 -= grow_x;
  box.x1 += grow_x;
  box.y0 -= grow_y;
  box.y1 += grow_y;
  if (settings.jitter_px > 0.0) {
    std::uniform_int_distribution<int> jitter(-static_cast<int>(std::lround(settings.jitter_px)),
                                              static_cast<int>(std::lround(settings.jitter_px)));
    box.x0 += jitter(rng);
    box.y0 += jitter(rng);
    box.x1 += jitter(rng);
    box.y1 += jitter(rng);
  }
  box = box.clipped(width, height);
  if (box.empty()) box = silhouette.clipped(width, height);  // jitter collapsed a thin box

  std::normal_distribution<double> score_noise(settings.score_mean, settings.score_sigma);
  Detection detection;
  detection.item_id = query_item;
  detection.box = box;
  detection.score = clamp01(score_noise(rng));
  return detection;
}

std::vector<Eigen::Vector3d> estimate_normals(const PointCloud& cloud, int k) {
  if (k < 3) throw std::invalid_argument("estimate_normals: k must be >= 3");
  const std::size_t n = cloud.points.size();
  std::vector<Eigen::Vector3d> normals(n, Eigen::Vector3d::Zero());

  if (cloud.organized_shape) {
    const int width = cloud.width();
    const int height = cloud.height();
    const int half = 4;  // 9x9 candidate window around each pixel
    std::vector<int> candidates;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::size_t idx = cloud.index(x, y);
        if (!cloud.valid[idx]) continue;
        candidates.clear();
        for (int dy = -half; dy <= half; ++dy) {
          int yy = y + dy;
          if (yy < 0 || yy >= height) continue;
          for (int dx = -half; dx <= half; ++dx) {
            int xx = x + dx;
            if (xx < 0 || xx >= width) continue;
            std::size_t cand = cloud.index(xx, yy);
            if (cloud.valid[cand]) candidates.push_back(static_cast<int>(cand));
          }
        }
        std::vector<int> nn = k_nearest(cloud.points, candidates, cloud.points[idx], k,
                                        kNeighborRadius, static_cast<int>(idx));
        nn.push_back(static_cast<int>(idx));
        if (nn.size() < 3) continue;
        Eigen::Vector3d normal = pca_normal(cloud.points, nn);
        if (normal.dot(cloud.points[idx]) > 0.0) normal = -normal;
        normals[idx] = normal;
      }
    }
    return normals;
  }

  std::vector<int> valid_all;
  for (std::size_t i = 0; i < n; ++i) {
    if (cloud.valid.empty() || cloud.valid[i]) valid_all.push_back(static_cast<int>(i));
  }
  for (int idx : valid_all) {
    std::vector<int> nn =
        k_nearest(cloud.points, valid_all, cloud.points[idx], k, kNeighborRadius, idx);
    nn.push_back(idx);
    if (nn.size() < 3) continue;
    Eigen::Vector3d normal = pca_normal(cloud.points, nn);
    if (normal.dot(cloud.points[idx]) > 0.0) normal = -normal;
    normals[idx] = normal;
  }
  return normals;
}

FeatureVector extract_features(const PointCloud& cloud,
                               const std::vector<Eigen::Vector3d>& normals,
                               const std::vector<int>& region, int k) {
  if (region.empty()) throw std::invalid_argument("extract_features: empty region");

  std::vector<int> usable;
  usable.reserve(region.size());
  for (int idx : region) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= cloud.points.size()) {
      throw std::out_of_range("extract_features: region index out of range");
    }
    if (cloud.valid.empty() || cloud.valid[idx]) usable.push_back(idx);
  }

  FeatureVector fv;
  auto* shape = fv.values.data();
  auto* hue = fv.values.data() + FeatureVector::kShapeBins;
  auto* gray = fv.values.data() + FeatureVector::kShapeBins + FeatureVector::kHueBins;

  std::vector<int> oriented;
  for (int idx : usable) {
    if (normals[idx].squaredNorm() > 0.5) oriented.push_back(idx);
  }
  for (int idx : oriented) {
    std::vector<int> nn = k_nearest(cloud.points, oriented, cloud.points[idx], k,
                                    std::numeric_limits<double>::infinity(), idx);
    for (int j : nn) {
      double c = std::abs(normals[idx].dot(normals[j]));
      double angle = std::acos(std::min(1.0, c));
      int bin = std::min(FeatureVector::kShapeBins - 1,
                         static_cast<int>(angle / (M_PI / 2.0) * FeatureVector::kShapeBins));
      shape[bin] += 1.0;
    }
  }

  for (int idx : usable) {
    double h;
    if (rgb_to_hue(cloud.colors[idx], &h)) {
      int bin = std::min(FeatureVector::kHueBins - 1,
                         static_cast<int>(h * FeatureVector::kHueBins));
      hue[bin] += 1.0;
    }
    double g = rgb_to_gray(cloud.colors[idx]);
    int bin = std::min(FeatureVector::kGrayBins - 1,
                       static_cast<int>(clamp01(g) * FeatureVector::kGrayBins));
    gray[bin] += 1.0;
  }

  auto normalize_block = [](double* block, int size) {
    double sum = std::accumulate(block, block + size, 0.0);
    if (sum > 0.0) {
      for (int i = 0; i < size; ++i) block[i] /= sum;
    }
  };
  normalize_block(shape, FeatureVector::kShapeBins);
  normalize_block(hue, FeatureVector::kHueBins);
  normalize_block(gray, FeatureVector::kGrayBins);
  return fv;
}

double DecisionTree::predict(const FeatureVector& x) const {
  int node = 0;
  while (nodes[node].feature >= 0) {
    node = x.values[nodes[node].feature] < nodes[node].threshold ? nodes[node].left
                                                                 : nodes[node].right;
  }
  return nodes[node].probability;
}

double RandomForest::predict(const FeatureVector& x) const {
  if (trees.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& tree : trees) sum += tree.predict(x);
  return sum / static_cast<double>(trees.size());
}

namespace {

struct TreeBuilder {
  const std::vector<const FeatureVector*>& features;
  const std::vector<int>& labels;
  int max_depth;
  int mtry;
  Rng& rng;
  std::vector<TreeNode> nodes;

  int build(std::vector<int>& samples, int depth) {
    int positive = 0;
    for (int s : samples) positive += labels[s];
    const int total = static_cast<int>(samples.size());
    const double prob = static_cast<double>(positive) / total;

    auto make_leaf = [&]() {
      TreeNode leaf;
      leaf.probability = prob;
      nodes.push_back(leaf);
      return static_cast<int>(nodes.size()) - 1;
    };
    if (positive == 0 || positive == total || depth >= max_depth || total < 2) {
      return make_leaf();
    }

    // candidate features: mtry distinct indices, order fixed by the rng
    std::array<int, FeatureVector::kSize> pool;
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < mtry; ++i) {
      std::uniform_int_distribution<int> pick(i, FeatureVector::kSize - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }

    const double parent_gini = 2.0 * prob * (1.0 - prob);
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<std::pair<double, int>> sorted(total);
    for (int fi = 0; fi < mtry; ++fi) {
      const int f = pool[fi];
      for (int i = 0; i < total; ++i) {
        sorted[i] = {features[samples[i]]->values[f], labels[samples[i]]};
      }
      std::sort(sorted.begin(), sorted.end());
      int left_pos = 0;
      for (int i = 0; i + 1 < total; ++i) {
        left_pos += sorted[i].second;
        if (sorted[i].first == sorted[i + 1].first) continue;
        const int nl = i + 1;
        const int nr = total - nl;
        const double pl = static_cast<double>(left_pos) / nl;
        const double pr = static_cast<double>(positive - left_pos) / nr;
        const double child_gini =
            (nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)) / total;
        const double gain = parent_gini - child_gini;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return make_leaf();

    std::vector<int> left, right;
    for (int s : samples) {
      (features[s]->values[best_feature] < best_threshold ? left : right).push_back(s);
    }
    if (left.empty() || right.empty()) return make_leaf();

    TreeNode node;
    node.feature = best_feature;
    node.threshold = best_threshold;
    nodes.push_back(node);
    const int self = static_cast<int>(nodes.size()) - 1;
    nodes[self].left = build(left, depth + 1);
    nodes[self].right = build(right, depth + 1);
    return self;
  }
};

}  // namespace

RandomForest train_forest(const std::vector<FeatureVector>& positives,
                          const std::vector<FeatureVector>& negatives, int tree_count,
                          int max_depth, std::uint64_t seed) {
  if (positives.empty() || negatives.empty()) {
    throw std::invalid_argument("train_forest: both classes must be non-empty");
  }
  if (tree_count < 1 || max_depth < 1) {
    throw std::invalid_argument("train_forest: tree_count and max_depth must be >= 1");
  }

  std::vector<const FeatureVector*> features;
  std::vector<int> labels;
  for (const auto& f : positives) {
    features.push_back(&f);
    labels.push_back(1);
  }
  for (const auto& f : negatives) {
    features.push_back(&f);
    labels.push_back(0);
  }
  const int n = static_cast<int>(features.size());
  // a lone tree is a plain decision tree: no ensemble to decorrelate, so it
  // searches every feature; forests use the sqrt(d) subset rule
  const int mtry = tree_count == 1
                       ? FeatureVector::kSize
                       : static_cast<int>(std::sqrt(static_cast<double>(FeatureVector::kSize)));

  RandomForest forest;
  forest.max_depth = max_depth;
  forest.trees.resize(tree_count);
  for (int t = 0; t < tree_count; ++t) {
    Rng rng(derive_seed(seed, 0x7265e5, t));
    std::vector<int> bootstrap(n);
    if (tree_count == 1) {
      std::iota(bootstrap.begin(), bootstrap.end(), 0);
    } else {
      std::uniform_int_distribution<int> pick(0, n - 1);
      for (int& b : bootstrap) b = pick(rng);
    }
    TreeBuilder builder{features, labels, max_depth, mtry, rng, {}};
    std::vector<int> samples = bootstrap;
    builder.build(samples, 0);
    forest.trees[t].nodes = std::move(builder.nodes);
  }
  return forest;
}

namespace {

// Local-window feature for one pixel; nullopt when the window holds too few
// valid points to be meaningful.
std::optional<FeatureVector> window_features(const PointCloud& cloud,
                                             const std::vector<Eigen::Vector3d>& normals, int x,
                                             int y, int window, int feature_k) {
  const int half = window / 2;
  const int width = cloud.width();
  const int height = cloud.height();
  std::vector<int> region;
  for (int dy = -half; dy <= half; ++dy) {
    int yy = y + dy;
    if (yy < 0 || yy >= height) continue;
    for (int dx = -half; dx <= half; ++dx) {
      int xx = x + dx;
      if (xx < 0 || xx >= width) continue;
      std::size_t idx = cloud.index(xx, yy);
      if (cloud.valid[idx]) region.push_back(static_cast<int>(idx));
    }
  }
  if (region.size() < 4) return std::nullopt;
  return extract_features(cloud, normals, region, feature_k);
}

}  // namespace

ProbabilityMap classify_pixels(const RandomForest& forest, const RenderedBin& rendered,
                               const std::vector<Eigen::Vector3d>& normals, const Detection& roi,
                               int window, int feature_k) {
  const PointCloud& cloud = rendered.cloud;
  PixelRect rect = roi.box.clipped(cloud.width(), cloud.height());
  if (rect.empty()) throw std::invalid_argument("classify_pixels: empty ROI");

  ProbabilityMap map;
  map.roi = rect;
  map.values.assign(static_cast<std::size_t>(rect.width()) * rect.height(), 0.0);
  map.flags.assign(map.values.size(), 0);

  for (int y = rect.y0; y <= rect.y1; ++y) {
    for (int x = rect.x0; x <= rect.x1; ++x) {
      if (!cloud.valid[cloud.index(x, y)]) continue;
      std::optional<FeatureVector> fv = window_features(cloud, normals, x, y, window, feature_k);
      if (!fv) continue;
      map.values[map.index(x, y)] = forest.predict(*fv);
      map.flags[map.index(x, y)] = 1;
    }
  }
  return map;
}

ModeResult mean_shift_mode(const ProbabilityMap& map, double bandwidth, double adaptivity,
                           double floor_px) {
  if (!(bandwidth > 0.0) || !(adaptivity > 0.0) || adaptivity > 1.0) {
    throw std::invalid_argument("mean_shift_mode: bandwidth > 0 and adaptivity in (0,1] required");
  }

  std::vector<Eigen::Vector2d> support;
  std::vector<double> weight;
  for (int y = map.roi.y0; y <= map.roi.y1; ++y) {
    for (int x = map.roi.x0; x <= map.roi.x1; ++x) {
      double p = map.at(x, y);
      if (p > 0.5) {
        support.emplace_back(static_cast<double>(x), static_cast<double>(y));
        weight.push_back(p);
      }
    }
  }
  if (support.empty()) {
    throw NoEvidenceError("mean_shift_mode: no pixel above the 0.5 threshold");
  }

  Eigen::Vector2d pos = Eigen::Vector2d::Zero();
  double wsum = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    pos += weight[i] * support[i];
    wsum += weight[i];
  }
  pos /= wsum;

  double bw = bandwidth;
  double confidence = 0.0;
  for (int iter = 0; iter < 500; ++iter) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    double wmean = 0.0;
    double psum = 0.0;
    int in_kernel = 0;
    const double bw2 = bw * bw;
    for (std::size_t i = 0; i < support.size(); ++i) {
      if ((support[i] - pos).squaredNorm() > bw2) continue;
      mean += weight[i] * support[i];
      wmean += weight[i];
      psum += weight[i];
      ++in_kernel;
    }
    if (in_kernel == 0) {
      bw *= 1.5;  // kernel fell off the support; widen and retry
      continue;
    }
    mean /= wmean;
    confidence = psum / in_kernel;
    const double shift = (mean - pos).norm();
    pos = mean;
    const bool at_floor = bw <= floor_px + 1e-9;
    if (shift < 0.5 && at_floor) break;
    bw = std::max(floor_px, bw * adaptivity);
  }
  return {pos, confidence};
}

SuctionTarget suction_target(const PointCloud& cloud, const std::vector<Eigen::Vector3d>& normals,
                             const Eigen::Vector2d& mode_pixel, const std::vector<int>& region,
                             double confidence) {
  if (region.empty()) throw std::invalid_argument("suction_target: empty region");
  const int x = static_cast<int>(std::lround(mode_pixel.x()));
  const int y = static_cast<int>(std::lround(mode_pixel.y()));
  if (x < 0 || x >= cloud.width() || y < 0 || y >= cloud.height()) {
    throw InvalidDepthError("suction_target: mode pixel outside the image");
  }
  const std::size_t idx = cloud.index(x, y);
  if (!cloud.valid[idx] || normals[idx].squaredNorm() < 0.5) {
    throw InvalidDepthError("suction_target: no usable depth or normal at the mode pixel");
  }

  SuctionTarget target;
  target.point = cloud.points[idx];
  target.confidence = confidence;

  // The cup seals over a patch, not a point: average the oriented normals
  // of nearby pixels that lie within a cup radius of the contact point.
  constexpr double kPatchRadius = 0.015;
  constexpr int kPixelReach = 12;
  Eigen::Vector3d patch_normal = Eigen::Vector3d::Zero();
  for (int py = std::max(0, y - kPixelReach); py <= std::min(cloud.height() - 1, y + kPixelReach);
       ++py) {
    for (int px = std::max(0, x - kPixelReach); px <= std::min(cloud.width() - 1, x + kPixelReach);
         ++px) {
      const std::size_t p = cloud.index(px, py);
      if (!cloud.valid[p] || normals[p].squaredNorm() < 0.5) continue;
      if ((cloud.points[p] - target.point).norm() > kPatchRadius) continue;
      patch_normal += normals[p];
    }
  }
  target.normal = patch_normal.squaredNorm() > 1e-12 ? patch_normal.normalized()
                                                     : normals[idx].normalized();

  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  int count = 0;
  for (int r : region) {
    if (!cloud.valid[r]) continue;
    centroid += cloud.points[r];
    ++count;
  }
  if (count == 0) throw std::invalid_argument("suction_target: region has no valid points");
  target.centroid = centroid / count;
  return target;
}

ForestLibrary::ForestLibrary(RackModel rack, PerceptionSettings settings)
    : rack_(std::move(rack)), settings_(settings) {}

RigidTransform upright_item_pose(const RackModel& rack, int bin_index, const Shape& shape,
                                 double u_offset, double depth_fraction, double yaw) {
  const RackPlane& plane = rack.config.plane;
  const Eigen::Vector3d n = plane.normal();
  const Eigen::Vector2d centre = rack.bin_centers_2d[bin_index];

  const int row = bin_index / RackModel::kColumns;
  const int col = bin_index % RackModel::kColumns;
  double floor_v = std::min(rack.corners[row][col].y(), rack.corners[row][col + 1].y()) +
                   0.5 * rack.config.wall_thickness_m;

  double half_height = 0.0;
  switch (shape.kind) {
    case ShapeKind::Box:
      half_height = 0.5 * shape.extents.z();
      break;
    case ShapeKind::Cylinder:
      half_height = 0.5 * shape.height;
      break;
    case ShapeKind::Sphere:
      half_height = shape.radius;
      break;
  }

  RigidTransform pose;
  Eigen::Matrix3d base;
  base.col(0) = n;
  base.col(1) = plane.e_u;
  base.col(2) = plane.e_v;  // local +z becomes rack-up
  pose.rotation = Eigen::AngleAxisd(yaw, plane.e_v).toRotationMatrix() * base;
  pose.translation = plane.lift({centre.x() + u_offset, floor_v}) +
                     half_height * plane.e_v + depth_fraction * rack.config.depth_m * n;
  return pose;
}

const ForestLibrary::ItemFeatures& ForestLibrary::features_for(const std::string& item) {
  auto it = feature_cache_.find(item);
  if (it != feature_cache_.end()) return it->second;

  const ItemSpec& spec = item_spec(item);
  std::size_t item_index = 0;
  for (std::size_t i = 0; i < item_catalog().size(); ++i) {
    if (item_catalog()[i].name == item) item_index = i;
  }

  ItemFeatures result;
  const RigidTransform camera = bin_view_camera_pose(rack_, training_bin_);
  const std::array<double, 4> yaws = {0.0, 0.7, 1.4, 2.1};
  for (std::size_t pose_i = 0; pose_i < yaws.size(); ++pose_i) {
    SceneObject obj = make_object(item, upright_item_pose(rack_, training_bin_, spec.shape, 0.0,
                                                          0.45, yaws[pose_i]));
    RenderSettings rs = RenderSettings::noiseless();
    rs.seed = derive_seed(settings_.seed, item_index, pose_i);
    RenderedBin rendered = render_bin_cloud(rack_, training_bin_, {obj}, camera, rs);
    std::vector<Eigen::Vector3d> normals = estimate_normals(rendered.cloud, settings_.normals_k);

    std::vector<int> object_pixels;
    for (std::size_t i = 0; i < rendered.labels.size(); ++i) {
      if (rendered.labels[i] == 0) object_pixels.push_back(static_cast<int>(i));
    }
    const std::size_t cap = 250;
    const std::size_t stride = std::max<std::size_t>(1, object_pixels.size() / cap);
    const int width = rendered.cloud.width();
    for (std::size_t i = 0; i < object_pixels.size(); i += stride) {
      int idx = object_pixels[i];
      auto fv = window_features(rendered.cloud, normals, idx % width, idx / width,
                                settings_.window, settings_.feature_k);
      if (fv) result.pixel_features.push_back(*fv);
    }
  }
  return feature_cache_.emplace(item, std::move(result)).first->second;
}

const RandomForest& ForestLibrary::forest_for(const std::string& item) {
  auto it = forest_cache_.find(item);
  if (it != forest_cache_.end()) return it->second;

  if (!wall_ready_) {
    const RigidTransform camera = bin_view_camera_pose(rack_, training_bin_);
    RenderSettings rs = RenderSettings::noiseless();
    rs.seed = derive_seed(settings_.seed, 0xa11);
    RenderedBin rendered = render_bin_cloud(rack_, training_bin_, {}, camera, rs);
    std::vector<Eigen::Vector3d> normals = estimate_normals(rendered.cloud, settings_.normals_k);
    std::vector<int> wall_pixels;
    for (std::size_t i = 0; i < rendered.labels.size(); ++i) {
      if (rendered.labels[i] == kLabelWall) wall_pixels.push_back(static_cast<int>(i));
    }
    const std::size_t cap = 600;
    const std::size_t stride = std::max<std::size_t>(1, wall_pixels.size() / cap);
    const int width = rendered.cloud.width();
    for (std::size_t i = 0; i < wall_pixels.size(); i += stride) {
      int idx = wall_pixels[i];
      auto fv = window_features(rendered.cloud, normals, idx % width, idx / width,
                                settings_.window, settings_.feature_k);
      if (fv) wall_features_.push_back(*fv);
    }
    wall_ready_ = true;
  }

  const std::vector<FeatureVector>& positives = features_for(item).pixel_features;
  if (positives.empty()) {
    throw std::runtime_error("forest_for: no training pixels for item " + item);
  }

  std::vector<FeatureVector> negatives = wall_features_;
  const auto& catalog = item_catalog();
  std::size_t item_index = 0;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (catalog[i].name == item) item_index = i;
  }
  for (std::size_t other = 1; other <= 2; ++other) {
    const std::string& name = catalog[(item_index + other) % catalog.size()].name;
    const auto& feats = features_for(name).pixel_features;
    const std::size_t cap = 150;
    const std::size_t stride = std::max<std::size_t>(1, feats.size() / cap);
    for (std::size_t i = 0; i < feats.size(); i += stride) negatives.push_back(feats[i]);
  }

  RandomForest forest =
      train_forest(positives, negatives, settings_.tree_count, settings_.forest_depth,
                   derive_seed(settings_.seed, 0xf03e57, item_index));
  return forest_cache_.emplace(item, std::move(forest)).first->second;
}

PerceptionOutcome locate_suction_target(const RenderedBin& rendered,
                                        const std::vector<SceneObject>& objects,
                                        const std::string& query_item, ForestLibrary& forests,
                                        const PerceptionSettings& settings) {
  PerceptionOutcome outcome;
  outcome.detection = detect_stub(rendered, objects, query_item, settings.detect);

  std::vector<Eigen::Vector3d> normals = estimate_normals(rendered.cloud, settings.normals_k);
  const RandomForest& forest = forests.forest_for(query_item);
  ProbabilityMap map = classify_pixels(forest, rendered, normals, outcome.detection,
                                       settings.window, settings.feature_k);

  std::vector<int> region;
  for (int y = map.roi.y0; y <= map.roi.y1; ++y) {
    for (int x = map.roi.x0; x <= map.roi.x1; ++x) {
      if (map.at(x, y) > 0.5) region.push_back(static_cast<int>(rendered.cloud.index(x, y)));
    }
  }

  for (int attempt = 0; attempt < 3; ++attempt) {
    outcome.mode = mean_shift_mode(map, settings.bandwidth_px, settings.adaptivity,
                                   settings.mode_floor_px);
    try {
      outcome.target = suction_target(rendered.cloud, normals, outcome.mode.pixel, region,
                                      outcome.mode.confidence);
      const int x = static_cast<int>(std::lround(outcome.mode.pixel.x()));
      const int y = static_cast<int>(std::lround(outcome.mode.pixel.y()));
      outcome.mode_index = static_cast<int>(rendered.cloud.index(x, y));
      return outcome;
    } catch (const InvalidDepthError&) {
      // carve out the failed mode and re-seek
      for (int y = map.roi.y0; y <= map.roi.y1; ++y) {
        for (int x = map.roi.x0; x <= map.roi.x1; ++x) {
          if ((Eigen::Vector2d(x, y) - outcome.mode.pixel).norm() <= 2.0) {
            map.values[map.index(x, y)] = 0.0;
          }
        }
      }
    }
  }
  throw InvalidDepthError("locate_suction_target: no usable suction pixel after retries");
}

std::string cloud_to_ascii(const PointCloud& cloud) {
  std::ostringstream out;
  out << "# width " << cloud.width() << " height " << cloud.height() << "\n";
  out.precision(9);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (!cloud.valid.empty() && !cloud.valid[i]) {
      out << "nan nan nan 0 0 0\n";
      continue;
    }
    const auto& p = cloud.points[i];
    const auto& c = cloud.colors[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << c.x() << ' ' << c.y() << ' ' << c.z()
        << '\n';
  }
  return out.str();
}

std::string probability_map_to_pgm(const ProbabilityMap& map) {
  std::ostringstream out;
  out << "P2\n" << map.roi.width() << ' ' << map.roi.height() << "\n255\n";
  for (int y = map.roi.y0; y <= map.roi.y1; ++y) {
    for (int x = map.roi.x0; x <= map.roi.x1; ++x) {
      out << static_cast<int>(std::lround(clamp01(map.at(x, y)) * 255.0));
      out << (x == map.roi.x1 ? '\n' : ' ');
    }
  }
  return out.str();
}

nlohmann::json bin_scene_to_json(const BinScene& scene) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& obj : scene.objects) objects.push_back(scene_object_to_json(obj));
  nlohmann::json j{{"objects", objects}, {"noise_sigma_m", scene.noise_sigma_m}};
  if (scene.camera_pose) j["camera_pose"] = transform_to_json(*scene.camera_pose);
  return j;
}

BinScene bin_scene_from_json(const nlohmann::json& j) {
  BinScene scene;
  for (const auto& obj : j.at("objects")) scene.objects.push_back(scene_object_from_json(obj));
  scene.noise_sigma_m = j.value("noise_sigma_m", scene.noise_sigma_m);
  if (j.contains("camera_pose")) scene.camera_pose = transform_from_json(j.at("camera_pose"));
  return scene;
}

}  // namespace pickstow
