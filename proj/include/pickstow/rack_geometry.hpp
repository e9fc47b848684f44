#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "pickstow/geometry.hpp"

namespace pickstow {

struct ParallelLinesError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientLinesError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LineOrientation { Vertical, Horizontal };

// A detected line, clipped to the working extent. Plane coordinates are
// (u, v) with v increasing upward.
struct LineSegment2D {
  Eigen::Vector2d p1 = Eigen::Vector2d::Zero();
  Eigen::Vector2d p2 = Eigen::Vector2d::Zero();
  LineOrientation orientation_tag = LineOrientation::Vertical;
};

struct EdgePointSet {
  std::vector<Eigen::Vector2d> points;
  Rect2d extent;
};

// Pose of the rack's front plane in the robot base frame. A plane point
// (u, v) lifts to origin + u * e_u + v * e_v; bins recede along the
// outward normal e_u x e_v.
struct RackPlane {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d e_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d e_v = Eigen::Vector3d::UnitY();

  Eigen::Vector3d normal() const { return e_u.cross(e_v); }
  Eigen::Vector3d lift(const Eigen::Vector2d& uv) const {
    return origin + uv.x() * e_u + uv.y() * e_v;
  }
};

struct RackConfig {
  int columns = 3;
  int rows = 4;
  std::vector<double> column_widths_m = {0.16, 0.16, 0.16};
  std::vector<double> row_heights_m = {0.14, 0.14, 0.14, 0.14};
  double wall_thickness_m = 0.01;
  double depth_m = 0.30;
  RackPlane plane;

  double total_width() const;
  double total_height() const;
};

// Grid indices: corners[h][v] is the intersection of horizontal line h
// (0 = bottom) with vertical line v (0 = left). Bins are numbered
// row-major from the bottom-left: bin = row * columns + col.
struct RackModel {
  static constexpr int kRows = 4;
  static constexpr int kColumns = 3;
  static constexpr int kBins = kRows * kColumns;

  std::array<std::array<Eigen::Vector2d, kColumns + 1>, kRows + 1> corners{};
  std::array<std::array<Eigen::Vector2d, 4>, kBins> bin_corners{};
  std::array<Eigen::Vector2d, kBins> bin_centers_2d{};
  std::array<Eigen::Vector3d, kBins> bin_centers_3d{};
  std::vector<Aabb> wall_boxes;
  RackConfig config;
  std::vector<std::string> warnings;
};

// Standard (rho, theta) Hough accumulator over a sparse point set.
// theta is the normal angle in [0, pi); a line is vertical when its normal
// is within 20 degrees of the u axis, horizontal when within 20 degrees of
// the v axis; other peaks are discarded.
std::vector<LineSegment2D> hough_lines(const EdgePointSet& edges, double rho_resolution,
                                       double theta_resolution, int threshold);

// Infinite-line intersection of a vertical and a horizontal segment via the
// two-determinant form. Throws ParallelLinesError when the denominator
// magnitude is at or below 1e-12.
Eigen::Vector2d intersect_lines(const LineSegment2D& v, const LineSegment2D& h);

// Assembles the full 5x4 corner grid from detected lines, inferring any
// missing lines from the configured spacings. Requires at least 2 vertical
// and 3 horizontal lines; exactly 2 verticals are taken as the outer pair
// and exactly 3 horizontals as the middle trio. Records a warning when a
// detected spacing deviates more than 15% from the configured one.
RackModel build_rack(const std::vector<LineSegment2D>& lines, const RackConfig& config);

// Axis-aligned bounding rectangle of the bin's 4 corners grown by margin.
Rect2d bin_roi(const RackModel& rack, int bin_index, double margin = 0.0);

// The ideal 4 vertical + 5 horizontal line segments of a configured rack,
// in plane coordinates with the lower-left corner at the origin.
std::vector<LineSegment2D> canonical_rack_lines(const RackConfig& config);

// build_rack applied to the canonical lines: the rack as configured.
RackModel rack_from_config(const RackConfig& config);

nlohmann::json rack_config_to_json(const RackConfig& config);
RackConfig rack_config_from_json(const nlohmann::json& j);
nlohmann::json rack_model_to_json(const RackModel& rack);

}  // namespace pickstow
