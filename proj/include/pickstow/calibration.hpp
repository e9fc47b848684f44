#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "pickstow/geometry.hpp"

namespace pickstow {

struct DegenerateGeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Paired observations of the same physical points, one set per frame.
struct PointPairSet {
  std::vector<Eigen::Vector3d> camera_points;
  std::vector<Eigen::Vector3d> robot_points;

  std::size_t size() const { return camera_points.size(); }
};

struct CalibrationResult {
  RigidTransform transform;
  double rms_error = 0.0;
  std::vector<double> per_point_residuals;
};

// Least-squares rigid transform camera -> robot via SVD of the cross
// covariance. The rotation is always proper: when det(V U^T) = -1 the last
// column of V is negated. Throws DegenerateGeometryError when the camera
// points are coincident or collinear (second singular value below 1e-12).
CalibrationResult estimate_rigid_transform(const PointPairSet& pairs);

Eigen::Vector3d apply_calibration(const CalibrationResult& result,
                                  const Eigen::Vector3d& camera_point);

// Isotropic Gaussian noise added to the robot-side points of each synthetic
// trial; sigma is a modeling knob, not a measured quantity.
struct NoiseModel {
  double sigma_m = 0.005;
};

struct SweepRow {
  int sample_size = 0;
  double mean_rms_m = 0.0;
};

// Monte-Carlo accuracy sweep: for each N, run `trials` synthetic
// calibrations against a random ground-truth rigid motion and average the
// RMS. Trials draw from independent seed streams derived from `seed`.
std::vector<SweepRow> rms_vs_sample_size(const NoiseModel& noise, const std::vector<int>& sizes,
                                         int trials = 100, std::uint64_t seed = 2016);

// One synthetic trial: N camera points uniform in a 1 m cube, robot points
// through a random proper rigid motion plus noise. Returns the trial's RMS.
double synthetic_calibration_rms(int sample_size, const NoiseModel& noise, std::uint64_t seed);

std::string sweep_csv(const std::vector<SweepRow>& rows);

PointPairSet point_pair_set_from_json(const nlohmann::json& j);
nlohmann::json point_pair_set_to_json(const PointPairSet& pairs);

}  // namespace pickstow
