#include "pickstow/calibration.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pickstow/rng.hpp"

namespace pickstow {

namespace {

void validate_pairs(const PointPairSet& pairs) {
  if (pairs.camera_points.size() != pairs.robot_points.size()) {
    throw std::invalid_argument("point sets must have equal lengths");
  }
  if (pairs.size() < 3) {
    throw std::invalid_argument("at least 3 point pairs are required");
  }
  for (const auto& p : pairs.camera_points) {
    if (!p.allFinite()) throw std::invalid_argument("camera points must be finite");
  }
  for (const auto& p : pairs.robot_points) {
    if (!p.allFinite()) throw std::invalid_argument("robot points must be finite");
  }
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace

CalibrationResult estimate_rigid_transform(const PointPairSet& pairs) {
  validate_pairs(pairs);
  const auto n = static_cast<double>(pairs.size());

  Eigen::Vector3d camera_centroid = Eigen::Vector3d::Zero();
  Eigen::Vector3d robot_centroid = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    camera_centroid += pairs.camera_points[i];
    robot_centroid += pairs.robot_points[i];
  }
  camera_centroid /= n;
  robot_centroid /= n;

  Eigen::Matrix3d c = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    c += (pairs.camera_points[i] - camera_centroid) *
         (pairs.robot_points[i] - robot_centroid).transpose();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(c, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(1) < 1e-12) {
    throw DegenerateGeometryError(
        "estimate_rigid_transform: point set is coincident or collinear");
  }
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d r = v * u.transpose();
  if (r.determinant() < 0.0) {
    v.col(2) = -v.col(2);
    r = v * u.transpose();
  }

  CalibrationResult result;
  result.transform.rotation = r;
  result.transform.translation = -(r * camera_centroid) + robot_centroid;

  double sum_sq = 0.0;
  result.per_point_residuals.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double residual =
        (pairs.robot_points[i] - result.transform.apply(pairs.camera_points[i])).norm();
    result.per_point_residuals.push_back(residual);
    sum_sq += residual * residual;
  }
  result.rms_error = std::sqrt(sum_sq / n);
  return result;
}

Eigen::Vector3d apply_calibration(const CalibrationResult& result,
                                  const Eigen::Vector3d& camera_point) {
  return result.transform.apply(camera_point);
}

double synthetic_calibration_rms(int sample_size, const NoiseModel& noise, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> cube(-0.5, 0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Eigen::Matrix3d r0 = random_rotation(rng);
  Eigen::Vector3d t0(cube(rng) * 2.0, cube(rng) * 2.0, cube(rng) * 2.0);

  PointPairSet pairs;
  pairs.camera_points.reserve(sample_size);
  pairs.robot_points.reserve(sample_size);
  for (int i = 0; i < sample_size; ++i) {
    Eigen::Vector3d p(cube(rng), cube(rng), cube(rng));
    Eigen::Vector3d q = r0 * p + t0;
    if (noise.sigma_m > 0.0) {
      q += noise.sigma_m * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    }
    pairs.camera_points.push_back(p);
    pairs.robot_points.push_back(q);
  }
  return estimate_rigid_transform(pairs).rms_error;
}

std::vector<SweepRow> rms_vs_sample_size(const NoiseModel& noise, const std::vector<int>& sizes,
                                         int trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  std::vector<SweepRow> rows;
  rows.reserve(sizes.size());
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    int n = sizes[si];
    if (n < 3) throw std::invalid_argument("sample sizes must be >= 3");
    double sum = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      sum += synthetic_calibration_rms(n, noise, derive_seed(seed, si, trial));
    }
    rows.push_back({n, sum / trials});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "N,mean_rms_m\n";
  out.precision(12);
  for (const auto& row : rows) {
    out << row.sample_size << ',' << row.mean_rms_m << '\n';
  }
  return out.str();
}

PointPairSet point_pair_set_from_json(const nlohmann::json& j) {
  PointPairSet pairs;
  for (const char* key : {"camera", "robot"}) {
    if (!j.contains(key)) {
      throw std::invalid_argument(std::string("point pair JSON missing \"") + key + "\" array");
    }
    auto& dst = key == std::string("camera") ? pairs.camera_points : pairs.robot_points;
    for (const auto& row : j.at(key)) {
      if (row.size() != 3) throw std::invalid_argument("points must have 3 coordinates");
      dst.emplace_back(row[0].get<double>(), row[1].get<double>(), row[2].get<double>());
    }
  }
  validate_pairs(pairs);
  return pairs;
}

nlohmann::json point_pair_set_to_json(const PointPairSet& pairs) {
  nlohmann::json camera = nlohmann::json::array();
  nlohmann::json robot = nlohmann::json::array();
  for (const auto& p : pairs.camera_points) camera.push_back({p.x(), p.y(), p.z()});
  for (const auto& p : pairs.robot_points) robot.push_back({p.x(), p.y(), p.z()});
  return {{"camera", camera}, {"robot", robot}};
}

}  // namespace pickstow
