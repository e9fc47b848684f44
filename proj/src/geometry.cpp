#include "pickstow/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace pickstow {

Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r) {
  double cos_angle = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  double angle = std::acos(cos_angle);
  if (angle < 1e-12) {
    return Eigen::Vector3d::Zero();
  }
  if (angle > M_PI - 1e-6) {
    // Near pi the skew part vanishes; recover the axis from R + I.
    Eigen::Matrix3d b = 0.5 * (r + Eigen::Matrix3d::Identity());
    Eigen::Vector3d axis(std::sqrt(std::max(b(0, 0), 0.0)),
                         std::sqrt(std::max(b(1, 1), 0.0)),
                         std::sqrt(std::max(b(2, 2), 0.0)));
    // Fix signs against the off-diagonal terms.
    int k = 0;
    axis.maxCoeff(&k);
    for (int i = 0; i < 3; ++i) {
      if (i != k && b(k, i) < 0) axis[i] = -axis[i];
    }
    axis.normalize();
    return angle * axis;
  }
  Eigen::Vector3d axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return (angle / (2.0 * std::sin(angle))) * axis;
}

Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& w) {
  double angle = w.norm();
  if (angle < 1e-12) {
    return Eigen::Matrix3d::Identity() + skew(w);
  }
  Eigen::Vector3d axis = w / angle;
  Eigen::Matrix3d k = skew(axis);
  return Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
}

double point_aabb_distance(const Eigen::Vector3d& p, const Aabb& box) {
  Eigen::Vector3d clamped = p.cwiseMax(box.min).cwiseMin(box.max);
  return (p - clamped).norm();
}

double segment_aabb_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Aabb& box) {
  // d2(s) = |p(s) - clamp(p(s))|^2 with p(s) = a + s (b - a) is piecewise quadratic in s;
  // the clamp pattern only changes where a coordinate crosses a box face plane.
  Eigen::Vector3d d = b - a;
  std::array<double, 8> breaks{};
  int n = 0;
  breaks[n++] = 0.0;
  breaks[n++] = 1.0;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) continue;
    for (double bound : {box.min[i], box.max[i]}) {
      double s = (bound - a[i]) / d[i];
      if (s > 0.0 && s < 1.0) breaks[n++] = s;
    }
  }
  std::sort(breaks.begin(), breaks.begin() + n);

  double best = std::min(point_aabb_distance(a, box), point_aabb_distance(b, box));
  for (int i = 0; i + 1 < n; ++i) {
    double s0 = breaks[i], s1 = breaks[i + 1];
    if (s1 - s0 < 1e-15) continue;
    double sm = 0.5 * (s0 + s1);
    Eigen::Vector3d pm = a + sm * d;
    // Quadratic coefficients over the clamped axes for this interval.
    double qa = 0.0, qb = 0.0, qc = 0.0;
    for (int k = 0; k < 3; ++k) {
      double c;
      if (pm[k] < box.min[k]) {
        c = box.min[k];
      } else if (pm[k] > box.max[k]) {
        c = box.max[k];
      } else {
        continue;
      }
      double e = a[k] - c;
      qa += d[k] * d[k];
      qb += 2.0 * e * d[k];
      qc += e * e;
    }
    double s_star = sm;
    if (qa > 0.0) s_star = std::clamp(-qb / (2.0 * qa), s0, s1);
    for (double s : {s0, s1, s_star}) {
      best = std::min(best, point_aabb_distance(a + s * d, box));
    }
  }
  return best;
}

}  // namespace pickstow
