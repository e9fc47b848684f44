#include "pickstow/rack_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include <nlohmann/json.hpp>

namespace pickstow {

namespace {

constexpr double kOrientationCutoff = 20.0 * M_PI / 180.0;
constexpr double kSpacingWarnFraction = 0.15;

void validate_config(const RackConfig& c) {
  if (c.columns != RackModel::kColumns || c.rows != RackModel::kRows) {
    throw std::invalid_argument("rack grid is fixed at 4 rows x 3 columns");
  }
  if (c.column_widths_m.size() != static_cast<std::size_t>(c.columns) ||
      c.row_heights_m.size() != static_cast<std::size_t>(c.rows)) {
    throw std::invalid_argument("rack spacing lists must match the grid shape");
  }
  for (double w : c.column_widths_m) {
    if (!(w > 0.0)) throw std::invalid_argument("column widths must be positive");
  }
  for (double h : c.row_heights_m) {
    if (!(h > 0.0)) throw std::invalid_argument("row heights must be positive");
  }
  if (!(c.wall_thickness_m > 0.0)) throw std::invalid_argument("wall thickness must be positive");
  if (!(c.depth_m > 0.0)) throw std::invalid_argument("rack depth must be positive");
}

std::vector<double> cumulative(const std::vector<double>& steps) {
  std::vector<double> out(steps.size() + 1, 0.0);
  std::partial_sum(steps.begin(), steps.end(), out.begin() + 1);
  return out;
}

// Liang-Barsky clip of the infinite line rho = u cos(theta) + v sin(theta)
// to the rectangle; empty when the line misses it.
std::optional<std::pair<Eigen::Vector2d, Eigen::Vector2d>> clip_line(double rho, double theta,
                                                                     const Rect2d& extent) {
  Eigen::Vector2d n(std::cos(theta), std::sin(theta));
  Eigen::Vector2d p0 = rho * n;
  Eigen::Vector2d d(-n.y(), n.x());
  double t_lo = -std::numeric_limits<double>::infinity();
  double t_hi = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 2; ++axis) {
    if (std::abs(d[axis]) < 1e-15) {
      if (p0[axis] < extent.min[axis] || p0[axis] > extent.max[axis]) return std::nullopt;
      continue;
    }
    double ta = (extent.min[axis] - p0[axis]) / d[axis];
    double tb = (extent.max[axis] - p0[axis]) / d[axis];
    if (ta > tb) std::swap(ta, tb);
    t_lo = std::max(t_lo, ta);
    t_hi = std::min(t_hi, tb);
  }
  if (!(t_lo < t_hi)) return std::nullopt;
  return std::make_pair(Eigen::Vector2d(p0 + t_lo * d), Eigen::Vector2d(p0 + t_hi * d));
}

double line_coordinate(const LineSegment2D& line) {
  int axis = line.orientation_tag == LineOrientation::Vertical ? 0 : 1;
  return 0.5 * (line.p1[axis] + line.p2[axis]);
}

struct LineMatch {
  // canonical index -> detected line, or nullptr where inferred
  std::vector<const LineSegment2D*> assigned;
  double offset = 0.0;
  std::vector<std::string> warnings;
};

double subset_residual(const std::vector<double>& detected, const std::vector<double>& canon,
                       const std::vector<int>& canon_idx, double* offset_out) {
  double offset = 0.0;
  for (std::size_t i = 0; i < detected.size(); ++i) offset += detected[i] - canon[canon_idx[i]];
  offset /= static_cast<double>(detected.size());
  double residual = 0.0;
  for (std::size_t i = 0; i < detected.size(); ++i) {
    double r = detected[i] - canon[canon_idx[i]] - offset;
    residual += r * r;
  }
  *offset_out = offset;
  return residual;
}

// Enumerate increasing k-subsets of {0..n-1} in lexicographic order.
template <typename Fn>
void for_each_subset(int n, int k, Fn&& fn) {
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    fn(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) return;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

LineMatch match_lines(std::vector<const LineSegment2D*> detected, const std::vector<double>& canon,
                      const char* axis_name) {
  LineMatch result;
  std::sort(detected.begin(), detected.end(), [](const LineSegment2D* a, const LineSegment2D* b) {
    return line_coordinate(*a) < line_coordinate(*b);
  });
  const int m = static_cast<int>(canon.size());
  int n = static_cast<int>(detected.size());

  if (n > m) {
    // Keep the order-preserving subset of detected lines closest to the
    // configured spacing; surplus detections are reported, not fatal.
    std::vector<double> coords(n);
    for (int i = 0; i < n; ++i) coords[i] = line_coordinate(*detected[i]);
    std::vector<int> all_canon(m);
    std::iota(all_canon.begin(), all_canon.end(), 0);
    double best_residual = std::numeric_limits<double>::infinity();
    std::vector<int> best_subset;
    for_each_subset(n, m, [&](const std::vector<int>& subset) {
      std::vector<double> picked(m);
      for (int j = 0; j < m; ++j) picked[j] = coords[subset[j]];
      double offset = 0.0;
      double residual = subset_residual(picked, canon, all_canon, &offset);
      if (residual < best_residual) {
        best_residual = residual;
        best_subset = subset;
      }
    });
    result.warnings.push_back(std::string("ignored ") + std::to_string(n - m) + " surplus " +
                              axis_name + " lines");
    std::vector<const LineSegment2D*> kept;
    for (int i : best_subset) kept.push_back(detected[i]);
    detected = std::move(kept);
    n = m;
  }

  std::vector<double> coords(n);
  for (int i = 0; i < n; ++i) coords[i] = line_coordinate(*detected[i]);

  std::vector<int> assignment;
  if (n == 2 && m == 4) {
    assignment = {0, 3};  // exactly two verticals are the outer pair
    subset_residual(coords, canon, assignment, &result.offset);
  } else if (n == 3 && m == 5) {
    assignment = {1, 2, 3};  // exactly three horizontals are the middle trio
    subset_residual(coords, canon, assignment, &result.offset);
  } else {
    double best_residual = std::numeric_limits<double>::infinity();
    for_each_subset(m, n, [&](const std::vector<int>& subset) {
      double offset = 0.0;
      double residual = subset_residual(coords, canon, subset, &offset);
      if (residual < best_residual) {
        best_residual = residual;
        assignment = subset;
        result.offset = offset;
      }
    });
  }

  for (int i = 0; i + 1 < n; ++i) {
    double detected_gap = coords[i + 1] - coords[i];
    double canon_gap = canon[assignment[i + 1]] - canon[assignment[i]];
    if (std::abs(detected_gap - canon_gap) > kSpacingWarnFraction * canon_gap) {
      result.warnings.push_back(std::string("inconsistent ") + axis_name + " spacing: detected " +
                                std::to_string(detected_gap) + " m where the configured gap is " +
                                std::to_string(canon_gap) + " m");
    }
  }

  result.assigned.assign(m, nullptr);
  for (int i = 0; i < n; ++i) result.assigned[assignment[i]] = detected[i];
  return result;
}

Aabb slab_box(const RackPlane& plane, double u_lo, double u_hi, double v_lo, double v_hi,
              double d_lo, double d_hi) {
  Eigen::Vector3d n = plane.normal();
  Aabb box{Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity()),
           Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity())};
  for (double u : {u_lo, u_hi}) {
    for (double v : {v_lo, v_hi}) {
      for (double d : {d_lo, d_hi}) {
        Eigen::Vector3d p = plane.origin + u * plane.e_u + v * plane.e_v + d * n;
        box.min = box.min.cwiseMin(p);
        box.max = box.max.cwiseMax(p);
      }
    }
  }
  return box;
}

}  // namespace

double RackConfig::total_width() const {
  return std::accumulate(column_widths_m.begin(), column_widths_m.end(), 0.0);
}

double RackConfig::total_height() const {
  return std::accumulate(row_heights_m.begin(), row_heights_m.end(), 0.0);
}

std::vector<LineSegment2D> hough_lines(const EdgePointSet& edges, double rho_resolution,
                                       double theta_resolution, int threshold) {
  if (!(rho_resolution > 0.0) || !(theta_resolution > 0.0)) {
    throw std::invalid_argument("hough_lines: resolutions must be positive");
  }
  if (threshold < 1) throw std::invalid_argument("hough_lines: threshold must be >= 1");
  if (edges.points.empty()) throw std::invalid_argument("hough_lines: empty edge set");

  double rho_max = 0.0;
  for (const auto& p : edges.points) rho_max = std::max(rho_max, p.norm());
  rho_max += rho_resolution;

  const int n_theta = std::max(1, static_cast<int>(std::ceil(M_PI / theta_resolution)));
  const int n_rho = static_cast<int>(std::floor(2.0 * rho_max / rho_resolution)) + 1;
  std::vector<int> accum(static_cast<std::size_t>(n_theta) * n_rho, 0);
  auto cell = [&](int t, int r) -> int& { return accum[static_cast<std::size_t>(t) * n_rho + r]; };

  for (const auto& p : edges.points) {
    for (int t = 0; t < n_theta; ++t) {
      double theta = t * theta_resolution;
      double rho = p.x() * std::cos(theta) + p.y() * std::sin(theta);
      int r = static_cast<int>(std::llround((rho + rho_max) / rho_resolution));
      if (r >= 0 && r < n_rho) ++cell(t, r);
    }
  }

  struct Peak {
    int votes, t, r;
  };
  std::vector<Peak> peaks;
  for (int t = 0; t < n_theta; ++t) {
    for (int r = 0; r < n_rho; ++r) {
      int v = cell(t, r);
      if (v < threshold) continue;
      bool local_max = true;
      for (int dt = -1; dt <= 1 && local_max; ++dt) {
        for (int dr = -1; dr <= 1; ++dr) {
          if (dt == 0 && dr == 0) continue;
          int tt = t + dt, rr = r + dr;
          if (tt < 0 || tt >= n_theta || rr < 0 || rr >= n_rho) continue;
          if (cell(tt, rr) > v) {
            local_max = false;
            break;
          }
        }
      }
      if (local_max) peaks.push_back({v, t, r});
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.votes != b.votes) return a.votes > b.votes;
    if (a.t != b.t) return a.t < b.t;
    return a.r < b.r;
  });

  // Greedy suppression of plateau neighbours, including across the theta
  // wrap where (theta + pi, -rho) describes the same line.
  std::vector<Peak> kept;
  const int suppress = 2;
  for (const Peak& p : peaks) {
    bool near_kept = false;
    for (const Peak& k : kept) {
      int dt = std::abs(p.t - k.t);
      int dr = std::abs(p.r - k.r);
      if (dt <= suppress && dr <= suppress) {
        near_kept = true;
        break;
      }
      int dt_wrap = n_theta - dt;
      int dr_wrap = std::abs((p.r + k.r) - (n_rho - 1));
      if (dt_wrap <= suppress && dr_wrap <= suppress) {
        near_kept = true;
        break;
      }
    }
    if (!near_kept) kept.push_back(p);
  }

  std::vector<LineSegment2D> lines;
  for (const Peak& p : kept) {
    double theta = p.t * theta_resolution;
    double rho = -rho_max + p.r * rho_resolution;
    LineOrientation tag;
    if (std::min(theta, M_PI - theta) < kOrientationCutoff) {
      tag = LineOrientation::Vertical;
    } else if (std::abs(theta - M_PI / 2.0) < kOrientationCutoff) {
      tag = LineOrientation::Horizontal;
    } else {
      continue;
    }
    auto clipped = clip_line(rho, theta, edges.extent);
    if (!clipped) continue;
    lines.push_back({clipped->first, clipped->second, tag});
  }
  return lines;
}

Eigen::Vector2d intersect_lines(const LineSegment2D& v, const LineSegment2D& h) {
  const double x1v = v.p1.x(), y1v = v.p1.y(), x2v = v.p2.x(), y2v = v.p2.y();
  const double x1h = h.p1.x(), y1h = h.p1.y(), x2h = h.p2.x(), y2h = h.p2.y();
  const double den = (x1v - x2v) * (y1h - y2h) - (y1v - y2v) * (x1h - x2h);
  if (std::abs(den) <= 1e-12) {
    throw ParallelLinesError("intersect_lines: lines are parallel");
  }
  const double cross_v = x1v * y2v - y1v * x2v;
  const double cross_h = x1h * y2h - y1h * x2h;
  return {(cross_v * (x1h - x2h) - (x1v - x2v) * cross_h) / den,
          (cross_v * (y1h - y2h) - (y1v - y2v) * cross_h) / den};
}

RackModel build_rack(const std::vector<LineSegment2D>& lines, const RackConfig& config) {
  validate_config(config);

  std::vector<const LineSegment2D*> verticals;
  std::vector<const LineSegment2D*> horizontals;
  for (const auto& line : lines) {
    (line.orientation_tag == LineOrientation::Vertical ? verticals : horizontals).push_back(&line);
  }
  if (verticals.size() < 2 || horizontals.size() < 3) {
    throw InsufficientLinesError("build_rack: need at least 2 vertical and 3 horizontal lines, got " +
                                 std::to_string(verticals.size()) + " vertical and " +
                                 std::to_string(horizontals.size()) + " horizontal");
  }

  const std::vector<double> canon_u = cumulative(config.column_widths_m);
  const std::vector<double> canon_v = cumulative(config.row_heights_m);
  LineMatch vmatch = match_lines(verticals, canon_u, "vertical");
  LineMatch hmatch = match_lines(horizontals, canon_v, "horizontal");

  RackModel model;
  model.config = config;
  model.warnings = vmatch.warnings;
  model.warnings.insert(model.warnings.end(), hmatch.warnings.begin(), hmatch.warnings.end());

  // Reconstructed per-line coordinates: detected positions where available,
  // configured spacing plus the fitted offset elsewhere.
  std::vector<double> u_coord(canon_u.size()), v_coord(canon_v.size());
  std::vector<LineSegment2D> inferred_storage;
  inferred_storage.reserve(canon_u.size() + canon_v.size());
  std::vector<const LineSegment2D*> vline(canon_u.size()), hline(canon_v.size());

  double v_lo = canon_v.front() + hmatch.offset;
  double v_hi = canon_v.back() + hmatch.offset;
  double u_lo = canon_u.front() + vmatch.offset;
  double u_hi = canon_u.back() + vmatch.offset;

  for (std::size_t j = 0; j < canon_u.size(); ++j) {
    if (vmatch.assigned[j]) {
      vline[j] = vmatch.assigned[j];
      u_coord[j] = line_coordinate(*vmatch.assigned[j]);
    } else {
      u_coord[j] = canon_u[j] + vmatch.offset;
      inferred_storage.push_back({{u_coord[j], v_lo}, {u_coord[j], v_hi}, LineOrientation::Vertical});
      vline[j] = &inferred_storage.back();
    }
  }
  for (std::size_t j = 0; j < canon_v.size(); ++j) {
    if (hmatch.assigned[j]) {
      hline[j] = hmatch.assigned[j];
      v_coord[j] = line_coordinate(*hmatch.assigned[j]);
    } else {
      v_coord[j] = canon_v[j] + hmatch.offset;
      inferred_storage.push_back({{u_lo, v_coord[j]}, {u_hi, v_coord[j]}, LineOrientation::Horizontal});
      hline[j] = &inferred_storage.back();
    }
  }

  for (int h = 0; h <= RackModel::kRows; ++h) {
    for (int v = 0; v <= RackModel::kColumns; ++v) {
      model.corners[h][v] = intersect_lines(*vline[v], *hline[h]);
    }
  }

  for (int row = 0; row < RackModel::kRows; ++row) {
    for (int col = 0; col < RackModel::kColumns; ++col) {
      int bin = row * RackModel::kColumns + col;
      model.bin_corners[bin] = {model.corners[row][col], model.corners[row][col + 1],
                                model.corners[row + 1][col + 1], model.corners[row + 1][col]};
      Eigen::Vector2d centre = Eigen::Vector2d::Zero();
      for (const auto& c : model.bin_corners[bin]) centre += c;
      centre *= 0.25;
      model.bin_centers_2d[bin] = centre;
      model.bin_centers_3d[bin] = config.plane.lift(centre);
    }
  }

  const double t2 = 0.5 * config.wall_thickness_m;
  for (std::size_t j = 0; j < u_coord.size(); ++j) {
    model.wall_boxes.push_back(slab_box(config.plane, u_coord[j] - t2, u_coord[j] + t2,
                                        v_coord.front() - t2, v_coord.back() + t2, 0.0,
                                        config.depth_m));
  }
  for (std::size_t j = 0; j < v_coord.size(); ++j) {
    model.wall_boxes.push_back(slab_box(config.plane, u_coord.front() - t2, u_coord.back() + t2,
                                        v_coord[j] - t2, v_coord[j] + t2, 0.0, config.depth_m));
  }
  model.wall_boxes.push_back(slab_box(config.plane, u_coord.front() - t2, u_coord.back() + t2,
                                      v_coord.front() - t2, v_coord.back() + t2, config.depth_m,
                                      config.depth_m + config.wall_thickness_m));
  return model;
}

Rect2d bin_roi(const RackModel& rack, int bin_index, double margin) {
  if (bin_index < 0 || bin_index >= RackModel::kBins) {
    throw std::out_of_range("bin_roi: bin index must be in [0, 12)");
  }
  const auto& quad = rack.bin_corners[bin_index];
  Rect2d roi{quad[0], quad[0]};
  for (const auto& c : quad) {
    roi.min = roi.min.cwiseMin(c);
    roi.max = roi.max.cwiseMax(c);
  }
  roi.min.array() -= margin;
  roi.max.array() += margin;
  return roi;
}

std::vector<LineSegment2D> canonical_rack_lines(const RackConfig& config) {
  validate_config(config);
  const std::vector<double> canon_u = cumulative(config.column_widths_m);
  const std::vector<double> canon_v = cumulative(config.row_heights_m);
  std::vector<LineSegment2D> lines;
  for (double u : canon_u) {
    lines.push_back({{u, canon_v.front()}, {u, canon_v.back()}, LineOrientation::Vertical});
  }
  for (double v : canon_v) {
    lines.push_back({{canon_u.front(), v}, {canon_u.back(), v}, LineOrientation::Horizontal});
  }
  return lines;
}

RackModel rack_from_config(const RackConfig& config) {
  return build_rack(canonical_rack_lines(config), config);
}

nlohmann::json rack_config_to_json(const RackConfig& config) {
  Eigen::Matrix3d r;
  r.col(0) = config.plane.e_u;
  r.col(1) = config.plane.e_v;
  r.col(2) = config.plane.normal();
  RigidTransform pose{r, config.plane.origin};
  Eigen::Matrix4d m = pose.matrix();
  nlohmann::json pose_rows = nlohmann::json::array();
  for (int i = 0; i < 4; ++i) {
    pose_rows.push_back({m(i, 0), m(i, 1), m(i, 2), m(i, 3)});
  }
  return {{"columns", config.columns},
          {"rows", config.rows},
          {"column_widths_m", config.column_widths_m},
          {"row_heights_m", config.row_heights_m},
          {"wall_thickness_m", config.wall_thickness_m},
          {"depth_m", config.depth_m},
          {"rack_pose", pose_rows}};
}

RackConfig rack_config_from_json(const nlohmann::json& j) {
  RackConfig config;
  config.columns = j.value("columns", 3);
  config.rows = j.value("rows", 4);
  if (j.contains("column_widths_m")) {
    config.column_widths_m = j.at("column_widths_m").get<std::vector<double>>();
  }
  if (j.contains("row_heights_m")) {
    config.row_heights_m = j.at("row_heights_m").get<std::vector<double>>();
  }
  config.wall_thickness_m = j.value("wall_thickness_m", config.wall_thickness_m);
  config.depth_m = j.value("depth_m", config.depth_m);
  if (j.contains("rack_pose")) {
    const auto& rows = j.at("rack_pose");
    if (rows.size() != 4) throw std::invalid_argument("rack_pose must be a 4x4 matrix");
    Eigen::Matrix4d m;
    for (int i = 0; i < 4; ++i) {
      if (rows[i].size() != 4) throw std::invalid_argument("rack_pose must be a 4x4 matrix");
      for (int k = 0; k < 4; ++k) m(i, k) = rows[i][k].get<double>();
    }
    RigidTransform pose = RigidTransform::from_matrix(m);
    if (!pose.is_valid_rotation(1e-9)) {
      throw std::invalid_argument("rack_pose rotation block is not a proper rotation");
    }
    config.plane.origin = pose.translation;
    config.plane.e_u = pose.rotation.col(0);
    config.plane.e_v = pose.rotation.col(1);
  }
  validate_config(config);
  return config;
}

nlohmann::json rack_model_to_json(const RackModel& rack) {
  nlohmann::json corners = nlohmann::json::array();
  for (const auto& row : rack.corners) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : row) r.push_back({c.x(), c.y()});
    corners.push_back(r);
  }
  nlohmann::json bins = nlohmann::json::array();
  for (int b = 0; b < RackModel::kBins; ++b) {
    nlohmann::json quad = nlohmann::json::array();
    for (const auto& c : rack.bin_corners[b]) quad.push_back({c.x(), c.y()});
    const auto& c2 = rack.bin_centers_2d[b];
    const auto& c3 = rack.bin_centers_3d[b];
    bins.push_back({{"corners", quad},
                    {"center_2d", {c2.x(), c2.y()}},
                    {"center_3d", {c3.x(), c3.y(), c3.z()}}});
  }
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& box : rack.wall_boxes) {
    boxes.push_back({{"min", {box.min.x(), box.min.y(), box.min.z()}},
                     {"max", {box.max.x(), box.max.y(), box.max.z()}}});
  }
  return {{"corners", corners},
          {"bins", bins},
          {"wall_boxes", boxes},
          {"config", rack_config_to_json(rack.config)},
          {"warnings", rack.warnings}};
}

}  // namespace pickstow
