#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include <nlohmann/json.hpp>

#include "pickstow/orchestrator.hpp"
#include "pickstow/perception.hpp"
#include "pickstow/rack_geometry.hpp"
#include "pickstow/scene.hpp"
#include "test_support.hpp"

using namespace pickstow;
namespace ts = testsupport;

namespace {

RackModel mid_rack() { return rack_from_config(mid_workspace_rack_config()); }

// Quadratic ray-sphere intersection, written independently of the renderer.
std::optional<double> ray_sphere_t(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                   const Eigen::Vector3d& center, double radius) {
  const Eigen::Vector3d oc = origin - center;
  const double b = oc.dot(dir);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  const double t1 = -b - root;
  const double t2 = -b + root;
  if (t1 > 1e-9) return t1;
  if (t2 > 1e-9) return t2;
  return std::nullopt;
}

// Organized cloud of the camera-facing cap of a sphere, camera at the origin
// looking along +z. Pixels that miss the sphere are invalid.
PointCloud sphere_cap_cloud(const Eigen::Vector3d& center, double radius, int side = 41) {
  PointCloud cloud;
  cloud.organized_shape = {side, side};
  cloud.points.assign(static_cast<std::size_t>(side) * side, Eigen::Vector3d::Zero());
  cloud.colors.assign(cloud.points.size(), Eigen::Vector3d(0.9, 0.3, 0.2));
  cloud.valid.assign(cloud.points.size(), 0);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const Eigen::Vector3d ray =
          Eigen::Vector3d((x - side / 2) / 250.0, (y - side / 2) / 250.0, 1.0).normalized();
      if (auto t = ray_sphere_t(Eigen::Vector3d::Zero(), ray, center, radius)) {
        cloud.points[cloud.index(x, y)] = *t * ray;
        cloud.valid[cloud.index(x, y)] = 1;
      }
    }
  }
  return cloud;
}

// Organized cloud of the plane n . p = offset seen from the origin.
PointCloud plane_cloud(const Eigen::Vector3d& n_unit, double offset, int side, double pitch,
                       double z_sigma = 0.0, std::uint64_t seed = 0) {
  ts::Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PointCloud cloud;
  cloud.organized_shape = {side, side};
  cloud.points.reserve(static_cast<std::size_t>(side) * side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double px = (x - side / 2) * pitch;
      const double py = (y - side / 2) * pitch;
      double pz = (offset - n_unit.x() * px - n_unit.y() * py) / n_unit.z();
      if (z_sigma > 0.0) pz += z_sigma * gauss(rng);
      cloud.points.emplace_back(px, py, pz);
    }
  }
  cloud.colors.assign(cloud.points.size(), Eigen::Vector3d::Constant(0.5));
  cloud.valid.assign(cloud.points.size(), 1);
  return cloud;
}

std::vector<int> valid_region(const PointCloud& cloud) {
  std::vector<int> region;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (cloud.valid[i]) region.push_back(static_cast<int>(i));
  }
  return region;
}

// Camera at `position` with the optical axis along +x of the robot frame.
RigidTransform x_facing_camera(const Eigen::Vector3d& position) {
  Eigen::Matrix3d r;
  r.col(0) = Eigen::Vector3d::UnitY();
  r.col(1) = Eigen::Vector3d::UnitZ();
  r.col(2) = Eigen::Vector3d::UnitX();
  return {r, position};
}

PixelRect silhouette_of(const RenderedBin& rendered, int instance) {
  PixelRect box{rendered.cloud.width(), rendered.cloud.height(), -1, -1};
  for (int y = 0; y < rendered.cloud.height(); ++y) {
    for (int x = 0; x < rendered.cloud.width(); ++x) {
      if (rendered.labels[rendered.cloud.index(x, y)] != instance) continue;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x);
      box.y1 = std::max(box.y1, y);
    }
  }
  return box;
}

FeatureVector synthetic_feature(ts::Rng& rng, bool positive) {
  FeatureVector fv;
  for (int i = 0; i < FeatureVector::kSize; ++i) fv.values[i] = ts::urand(rng, 0.0, 0.05);
  // Informative block: disjoint ranges on three features.
  const double lo = positive ? 0.6 : 0.05;
  fv.values[2] = lo + ts::urand(rng, 0.0, 0.25);
  fv.values[18] = lo + ts::urand(rng, 0.0, 0.25);
  fv.values[33] = lo + ts::urand(rng, 0.0, 0.25);
  return fv;
}

// Flat-kernel weighted density argmax over the integer pixel grid: the
// stationary points of mean shift at the floor bandwidth.
Eigen::Vector2d kde_argmax(const ProbabilityMap& map, double bandwidth) {
  Eigen::Vector2d best = Eigen::Vector2d::Zero();
  double best_density = -1.0;
  for (int y = map.roi.y0; y <= map.roi.y1; ++y) {
    for (int x = map.roi.x0; x <= map.roi.x1; ++x) {
      double density = 0.0;
      for (int yy = map.roi.y0; yy <= map.roi.y1; ++yy) {
        for (int xx = map.roi.x0; xx <= map.roi.x1; ++xx) {
          const double p = map.at(xx, yy);
          if (p <= 0.5) continue;
          const double dx = xx - x, dy = yy - y;
          if (dx * dx + dy * dy <= bandwidth * bandwidth) density += p;
        }
      }
      if (density > best_density) {
        best_density = density;
        best = Eigen::Vector2d(x, y);
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("from_fov pins the horizontal field of view and the image center") {
  const CameraIntrinsics cam = CameraIntrinsics::from_fov(160, 120, 58.0 * M_PI / 180.0);
  CHECK(cam.width == 160);
  CHECK(cam.height == 120);
  CHECK(cam.fx == doctest::Approx(80.0 / std::tan(29.0 * M_PI / 180.0)).epsilon(1e-12));
  CHECK(cam.fy == cam.fx);
  CHECK(cam.cx == doctest::Approx(80.0).epsilon(1e-12));
  CHECK(cam.cy == doctest::Approx(60.0).epsilon(1e-12));
  CHECK(2.0 * std::atan(80.0 / cam.fx) == doctest::Approx(58.0 * M_PI / 180.0).epsilon(1e-12));
}

TEST_CASE("pixel_ray points through the pixel center with unit length") {
  const CameraIntrinsics cam = CameraIntrinsics::from_fov(160, 120, 1.0);
  for (auto [x, y] : {std::pair{0, 0}, {159, 119}, {80, 60}, {13, 97}}) {
    const Eigen::Vector3d ray = cam.pixel_ray(x, y);
    CHECK(ray.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ray.z() > 0.0);
    const Eigen::Vector3d expected =
        Eigen::Vector3d((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0)
            .normalized();
    CHECK((ray - expected).norm() <= 1e-12);
  }
}

TEST_CASE("ray_shape: closed-form hits on each primitive") {
  // Sphere from outside and from the center.
  const Shape sphere = Shape::sphere(0.1);
  const RigidTransform at_origin = RigidTransform::identity();
  auto hit = ray_shape({0.0, 0.0, -1.0}, Eigen::Vector3d::UnitZ(), sphere, at_origin);
  REQUIRE(hit.has_value());
  CHECK(hit->t == doctest::Approx(0.9).epsilon(1e-12));
  CHECK((hit->normal - Eigen::Vector3d(0, 0, -1)).norm() <= 1e-9);

  auto exit = ray_shape({0.0, 0.0, 0.0}, Eigen::Vector3d::UnitZ(), sphere, at_origin);
  REQUIRE(exit.has_value());
  CHECK(exit->t == doctest::Approx(0.1).epsilon(1e-12));

  // Box face.
  const Shape box = Shape::box({0.2, 0.2, 0.2});
  auto face = ray_shape({1.0, 0.02, -0.03}, -Eigen::Vector3d::UnitX(), box, at_origin);
  REQUIRE(face.has_value());
  CHECK(face->t == doctest::Approx(0.9).epsilon(1e-12));
  CHECK((face->normal - Eigen::Vector3d::UnitX()).norm() <= 1e-9);

  // Cylinder side and cap.
  const Shape cyl = Shape::cylinder(0.05, 0.2);
  auto side = ray_shape({1.0, 0.0, 0.04}, -Eigen::Vector3d::UnitX(), cyl, at_origin);
  REQUIRE(side.has_value());
  CHECK(side->t == doctest::Approx(0.95).epsilon(1e-12));
  CHECK((side->normal - Eigen::Vector3d::UnitX()).norm() <= 1e-9);

  auto cap = ray_shape({0.01, -0.01, 1.0}, -Eigen::Vector3d::UnitZ(), cyl, at_origin);
  REQUIRE(cap.has_value());
  CHECK(cap->t == doctest::Approx(0.9).epsilon(1e-12));
  CHECK((cap->normal - Eigen::Vector3d::UnitZ()).norm() <= 1e-9);

  CHECK_FALSE(ray_shape({1.0, 1.0, 0.0}, Eigen::Vector3d::UnitZ(), sphere, at_origin).has_value());
}

TEST_CASE("ray_shape is equivariant under a rigid motion of the shape") {
  ts::Rng rng(501);
  for (int trial = 0; trial < 30; ++trial) {
    const RigidTransform pose{ts::random_rotation(rng), ts::random_point(rng, 0.5)};
    Shape shape;
    switch (trial % 3) {
      case 0: shape = Shape::sphere(0.08); break;
      case 1: shape = Shape::box({0.1, 0.15, 0.2}); break;
      default: shape = Shape::cylinder(0.05, 0.18); break;
    }
    const Eigen::Vector3d origin_local(0.0, 0.0, -1.0);
    const Eigen::Vector3d dir_local = Eigen::Vector3d(0.05, -0.03, 1.0).normalized();
    const auto local = ray_shape(origin_local, dir_local, shape, RigidTransform::identity());
    const auto world = ray_shape(pose.apply(origin_local), pose.rotation * dir_local, shape, pose);
    REQUIRE(local.has_value() == world.has_value());
    if (local) {
      CHECK(world->t == doctest::Approx(local->t).epsilon(1e-9));
      CHECK((world->normal - pose.rotation * local->normal).norm() <= 1e-9);
    }
  }
}

TEST_CASE("ray_aabb_hit agrees with the slab-method oracle") {
  ts::Rng rng(502);
  const Aabb box{{-0.2, -0.1, 0.1}, {0.3, 0.4, 0.5}};
  int hits = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Vector3d origin = ts::random_point(rng, 1.0);
    const Eigen::Vector3d dir = ts::random_unit_vector(rng);
    const auto hit = ray_aabb_hit(origin, dir, box);
    const double oracle = ts::ray_box_entry(origin, dir, box.min, box.max);
    if (hit && oracle > 0.0) {
      ++hits;
      CHECK(hit->t == doctest::Approx(oracle).epsilon(1e-9));
      const Eigen::Vector3d p = origin + hit->t * dir;
      CHECK(ts::point_box_distance(p, box.min, box.max) <= 1e-9);
    } else if (oracle > 1e-9 && !box.contains(origin)) {
      CHECK(hit.has_value());
    }
  }
  CHECK(hits > 20);  // the sample actually exercised the hit branch
}

TEST_CASE("surface_distance matches the closed-form oracle everywhere") {
  ts::Rng rng(503);
  for (int trial = 0; trial < 500; ++trial) {
    Shape shape;
    switch (trial % 3) {
      case 0: shape = Shape::sphere(ts::urand(rng, 0.02, 0.1)); break;
      case 1:
        shape = Shape::box({ts::urand(rng, 0.02, 0.2), ts::urand(rng, 0.02, 0.2),
                            ts::urand(rng, 0.02, 0.2)});
        break;
      default: shape = Shape::cylinder(ts::urand(rng, 0.02, 0.08), ts::urand(rng, 0.04, 0.2));
    }
    const RigidTransform pose{ts::random_rotation(rng), ts::random_point(rng, 0.4)};
    const Eigen::Vector3d p = ts::random_point(rng, 0.6);
    CHECK(surface_distance(shape, pose, p) ==
          doctest::Approx(ts::shape_surface_distance(shape, pose, p)).epsilon(1e-9));
  }
}

TEST_CASE("surface normals step off the surface in the right direction") {
  ts::Rng rng(504);
  for (int trial = 0; trial < 100; ++trial) {
    const Shape shape = (trial % 2 == 0) ? Shape::sphere(0.06) : Shape::box({0.1, 0.14, 0.08});
    const RigidTransform pose{ts::random_rotation(rng), ts::random_point(rng, 0.3)};
    // A point clearly outside the shape.
    const Eigen::Vector3d p = pose.translation + ts::random_unit_vector(rng) * 0.4;
    Eigen::Vector3d normal;
    const double d = surface_distance(shape, pose, p, &normal);
    CHECK(normal.norm() == doctest::Approx(1.0).epsilon(1e-9));
    const double stepped = surface_distance(shape, pose, p + 1e-5 * normal);
    CHECK(stepped == doctest::Approx(d + 1e-5).epsilon(1e-6));
  }
}

TEST_CASE("edge_clearance: face interiors, rims and curvature caps") {
  const RigidTransform id = RigidTransform::identity();
  const Shape box = Shape::box({0.2, 0.3, 0.1});
  // Above the +z face center: the disk is limited by the nearer boundary.
  CHECK(edge_clearance(box, id, {0.0, 0.0, 0.2}) == doctest::Approx(0.1).epsilon(1e-12));
  // Near the +x edge of the +z face: clearance is the in-face gap.
  CHECK(edge_clearance(box, id, {0.08, 0.0, 0.2}) == doctest::Approx(0.02).epsilon(1e-12));

  const Shape ball = Shape::sphere(0.04);
  CHECK(edge_clearance(ball, id, {0.0, 0.0, 0.2}) == doctest::Approx(0.04).epsilon(1e-12));

  // Cylinder side: curvature cap vs distance to the caps.
  const Shape tall = Shape::cylinder(0.03, 0.2);
  CHECK(edge_clearance(tall, id, {0.1, 0.0, 0.0}) == doctest::Approx(0.03).epsilon(1e-12));
  const Shape squat = Shape::cylinder(0.1, 0.08);
  CHECK(edge_clearance(squat, id, {0.2, 0.0, 0.0}) == doctest::Approx(0.04).epsilon(1e-12));
  // Cap interior: distance to the cap rim.
  CHECK(edge_clearance(squat, id, {0.02, 0.0, 0.1}) == doctest::Approx(0.08).epsilon(1e-12));
}

TEST_CASE("bin_view_camera_pose stands off along the plane normal") {
  const RackModel rack = mid_rack();
  for (int bin : {0, 4, 11}) {
    const RigidTransform pose = bin_view_camera_pose(rack, bin, 0.25);
    const Eigen::Vector3d n = rack.config.plane.normal();
    CHECK((pose.rotation.col(2) - n).norm() <= 1e-12);
    CHECK((pose.translation - (rack.bin_centers_3d[bin] - 0.25 * n)).norm() <= 1e-9);
    CHECK(is_valid_rotation(pose.rotation, 1e-12));
  }
}

TEST_CASE("rendering an empty bin shows only walls and background") {
  const RackModel rack = mid_rack();
  const RenderedBin rendered =
      render_bin_cloud(rack, 4, {}, bin_view_camera_pose(rack, 4), RenderSettings::noiseless());
  REQUIRE(rendered.cloud.width() == 160);
  REQUIRE(rendered.cloud.height() == 120);
  REQUIRE(rendered.labels.size() == rendered.cloud.points.size());

  int wall_pixels = 0;
  for (std::size_t i = 0; i < rendered.labels.size(); ++i) {
    const int label = rendered.labels[i];
    CHECK((label == kLabelNone || label == kLabelWall));
    CHECK(rendered.cloud.valid[i] == (label != kLabelNone ? 1 : 0));
    if (label == kLabelNone) {
      CHECK(rendered.cloud.points[i].norm() == 0.0);
    } else {
      ++wall_pixels;
      // Wall hits land on a wall box surface.
      const Eigen::Vector3d p = rendered.camera_pose.apply(rendered.cloud.points[i]);
      double nearest = 1e9;
      for (const Aabb& box : rack.wall_boxes) {
        nearest = std::min(nearest, ts::point_box_distance(p, box.min, box.max));
      }
      CHECK(nearest <= 1e-9);
    }
  }
  CHECK(wall_pixels > 500);
}

TEST_CASE("rendered object pixels lie on the true surface along their ray") {
  const Eigen::Vector3d center(0.5, 0.02, -0.01);
  const double radius = 0.06;
  SceneObject ball = make_object("rawlings_baseball", {Eigen::Matrix3d::Identity(), center});
  ball.shape = Shape::sphere(radius);
  const RigidTransform camera = x_facing_camera(Eigen::Vector3d::Zero());
  const RenderedBin rendered = render_scene_cloud({}, {ball}, camera, RenderSettings::noiseless());

  int object_pixels = 0;
  for (int y = 0; y < rendered.cloud.height(); ++y) {
    for (int x = 0; x < rendered.cloud.width(); ++x) {
      const std::size_t i = rendered.cloud.index(x, y);
      if (rendered.labels[i] != 0) continue;
      ++object_pixels;
      const Eigen::Vector3d p_cam = rendered.cloud.points[i];
      // On the ray through the pixel center...
      CHECK((p_cam.normalized() - rendered.intrinsics.pixel_ray(x, y)).norm() <= 1e-9);
      // ...and on the sphere surface at the independently computed depth.
      const Eigen::Vector3d p_robot = rendered.camera_pose.apply(p_cam);
      CHECK(std::abs((p_robot - center).norm() - radius) <= 1e-9);
      const auto t = ray_sphere_t(camera.translation,
                                  camera.rotation * rendered.intrinsics.pixel_ray(x, y), center,
                                  radius);
      REQUIRE(t.has_value());
      CHECK(p_cam.norm() == doctest::Approx(*t).epsilon(1e-9));
    }
  }
  CHECK(object_pixels > 50);
}

TEST_CASE("nearer geometry wins every contested pixel") {
  SceneObject near_ball = make_object("rawlings_baseball",
                                      {Eigen::Matrix3d::Identity(), {0.4, 0.0, 0.0}});
  near_ball.shape = Shape::sphere(0.05);
  SceneObject far_ball = make_object("kleenex_towels",
                                     {Eigen::Matrix3d::Identity(), {0.7, 0.0, 0.0}});
  far_ball.shape = Shape::sphere(0.12);
  const RigidTransform camera = x_facing_camera(Eigen::Vector3d::Zero());
  const RenderedBin rendered =
      render_scene_cloud({}, {near_ball, far_ball}, camera, RenderSettings::noiseless());

  int near_count = 0, far_count = 0;
  for (int y = 0; y < rendered.cloud.height(); ++y) {
    for (int x = 0; x < rendered.cloud.width(); ++x) {
      const std::size_t i = rendered.cloud.index(x, y);
      const Eigen::Vector3d dir = camera.rotation * rendered.intrinsics.pixel_ray(x, y);
      const auto t_near = ray_sphere_t(camera.translation, dir, {0.4, 0.0, 0.0}, 0.05);
      const auto t_far = ray_sphere_t(camera.translation, dir, {0.7, 0.0, 0.0}, 0.12);
      int expected = kLabelNone;
      if (t_near && t_far) {
        expected = *t_near < *t_far ? 0 : 1;
      } else if (t_near) {
        expected = 0;
      } else if (t_far) {
        expected = 1;
      }
      CHECK(rendered.labels[i] == expected);
      if (rendered.labels[i] == 0) ++near_count;
      if (rendered.labels[i] == 1) ++far_count;
    }
  }
  CHECK(near_count > 50);
  CHECK(far_count > 50);  // the bigger sphere peeks out around the closer one
}

TEST_CASE("depth noise is seeded and reproducible") {
  const RackModel rack = mid_rack();
  SceneObject obj = make_object(
      "crayola_24_ct", upright_item_pose(rack, 4, item_spec("crayola_24_ct").shape, 0.0, 0.4, 0.3));
  RenderSettings noisy;
  noisy.seed = 99;
  const RigidTransform camera = bin_view_camera_pose(rack, 4);
  const RenderedBin a = render_bin_cloud(rack, 4, {obj}, camera, noisy);
  const RenderedBin b = render_bin_cloud(rack, 4, {obj}, camera, noisy);
  REQUIRE(a.cloud.points.size() == b.cloud.points.size());
  double self_gap = 0.0;
  for (std::size_t i = 0; i < a.cloud.points.size(); ++i) {
    self_gap = std::max(self_gap, (a.cloud.points[i] - b.cloud.points[i]).cwiseAbs().maxCoeff());
  }
  CHECK(self_gap == 0.0);

  const RenderedBin clean = render_bin_cloud(rack, 4, {obj}, camera, RenderSettings::noiseless());
  double noise_gap = 0.0;
  for (std::size_t i = 0; i < a.cloud.points.size(); ++i) {
    if (a.cloud.valid[i] && clean.cloud.valid[i]) {
      noise_gap = std::max(noise_gap, (a.cloud.points[i] - clean.cloud.points[i]).norm());
    }
  }
  CHECK(noise_gap > 1e-5);
}

TEST_CASE("estimate_normals recovers a tilted plane exactly") {
  const Eigen::Vector3d n = Eigen::Vector3d(0.1, 0.05, -1.0).normalized();
  const PointCloud cloud = plane_cloud(n, -0.4, 25, 0.004);
  const auto normals = estimate_normals(cloud, 12);
  // Flipped toward the camera at the origin: n.z < 0 already faces it.
  int checked = 0;
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (normals[i].squaredNorm() < 0.5) continue;
    ++checked;
    CHECK((normals[i] - n).norm() <= 1e-6);
  }
  CHECK(checked == static_cast<int>(cloud.points.size()));
}

TEST_CASE("estimate_normals on a sphere cap points radially outward") {
  const Eigen::Vector3d center(0.0, 0.0, 0.4);
  const double radius = 0.05;
  const PointCloud cloud = sphere_cap_cloud(center, radius);
  const auto normals = estimate_normals(cloud, 12);
  int checked = 0;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (!cloud.valid[i] || normals[i].squaredNorm() < 0.5) continue;
    const Eigen::Vector3d exact = (cloud.points[i] - center).normalized();
    const double angle = std::acos(std::min(1.0, std::abs(normals[i].dot(exact))));
    CHECK(angle <= 2.0 * M_PI / 180.0);
    // Flip convention: toward the camera at the origin.
    CHECK(normals[i].dot(-cloud.points[i]) > 0.0);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("estimate_normals tolerates 2 mm depth noise within 5 degrees") {
  const Eigen::Vector3d n = Eigen::Vector3d(0.15, -0.1, -1.0).normalized();
  const PointCloud cloud = plane_cloud(n, -0.4, 31, 0.005, 0.002, 505);
  const auto normals = estimate_normals(cloud, 20);
  double worst = 0.0;
  int checked = 0;
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (normals[i].squaredNorm() < 0.5) continue;
    worst = std::max(worst, std::acos(std::min(1.0, std::abs(normals[i].dot(n)))));
    ++checked;
  }
  CHECK(checked > 800);
  CHECK(worst <= 5.0 * M_PI / 180.0);
}

TEST_CASE("estimate_normals zeroes isolated points") {
  PointCloud cloud;
  cloud.organized_shape = {3, 1};
  cloud.points = {{0.0, 0.0, 0.3}, {1.0, 1.0, 2.0}, {-1.0, 0.5, 1.5}};  // all > 5 cm apart
  cloud.colors.assign(3, Eigen::Vector3d::Constant(0.5));
  cloud.valid = {1, 1, 1};
  const auto normals = estimate_normals(cloud, 4);
  for (const auto& n : normals) CHECK(n.norm() == 0.0);
}

TEST_CASE("feature blocks are L1-normalized histograms") {
  const PointCloud cloud = sphere_cap_cloud({0.0, 0.0, 0.4}, 0.05);
  const auto normals = estimate_normals(cloud, 12);
  const std::vector<int> region = valid_region(cloud);
  const FeatureVector fv = extract_features(cloud, normals, region);

  auto block_sum = [&](int begin, int size) {
    double s = 0.0;
    for (int i = begin; i < begin + size; ++i) s += fv.values[i];
    return s;
  };
  CHECK(block_sum(0, FeatureVector::kShapeBins) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(block_sum(FeatureVector::kShapeBins, FeatureVector::kHueBins) ==
        doctest::Approx(1.0).epsilon(1e-9));
  CHECK(block_sum(FeatureVector::kShapeBins + FeatureVector::kHueBins, FeatureVector::kGrayBins) ==
        doctest::Approx(1.0).epsilon(1e-9));
  for (double v : fv.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("features ignore region order and rigid motions") {
  const PointCloud cloud = sphere_cap_cloud({0.0, 0.0, 0.4}, 0.05);
  const auto normals = estimate_normals(cloud, 12);
  std::vector<int> region = valid_region(cloud);
  const FeatureVector base = extract_features(cloud, normals, region);

  std::vector<int> shuffled = region;
  std::mt19937_64 rng(506);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const FeatureVector permuted = extract_features(cloud, normals, shuffled);
  for (int i = 0; i < FeatureVector::kSize; ++i) {
    CHECK(permuted.values[i] == doctest::Approx(base.values[i]).epsilon(1e-12));
  }

  ts::Rng rot_rng(507);
  const Eigen::Matrix3d r = ts::random_rotation(rot_rng);
  PointCloud rotated = cloud;
  std::vector<Eigen::Vector3d> rotated_normals = normals;
  for (auto& p : rotated.points) p = r * p;
  for (auto& n : rotated_normals) n = r * n;
  const FeatureVector moved = extract_features(rotated, rotated_normals, region);
  for (int i = 0; i < FeatureVector::kSize; ++i) {
    CHECK(moved.values[i] == doctest::Approx(base.values[i]).epsilon(1e-9));
  }
}

TEST_CASE("curvature separates spheres from planes in the shape block") {
  const PointCloud ball = sphere_cap_cloud({0.0, 0.0, 0.35}, 0.05);
  const auto ball_normals = estimate_normals(ball, 12);
  const FeatureVector fb = extract_features(ball, ball_normals, valid_region(ball));

  const PointCloud flat = plane_cloud(Eigen::Vector3d(0, 0, -1), -0.35, 25, 0.004);
  const auto flat_normals = estimate_normals(flat, 12);
  const FeatureVector fp = extract_features(flat, flat_normals, valid_region(flat));

  double l1 = 0.0;
  for (int i = 0; i < FeatureVector::kShapeBins; ++i) {
    l1 += std::abs(fb.values[i] - fp.values[i]);
  }
  CHECK(l1 > 0.3);
  // The plane concentrates all neighbor angles at zero.
  CHECK(fp.values[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("extract_features rejects bad regions and zeroes invalid-only ones") {
  const PointCloud cloud = sphere_cap_cloud({0.0, 0.0, 0.4}, 0.05);
  const auto normals = estimate_normals(cloud, 12);
  CHECK_THROWS_AS((void)extract_features(cloud, normals, {}), std::invalid_argument);
  CHECK_THROWS_AS((void)extract_features(cloud, normals, {-1}), std::out_of_range);
  CHECK_THROWS_AS(
      (void)extract_features(cloud, normals, {static_cast<int>(cloud.points.size())}),
      std::out_of_range);

  std::vector<int> invalid_only;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (!cloud.valid[i]) invalid_only.push_back(static_cast<int>(i));
  }
  REQUIRE_FALSE(invalid_only.empty());
  const FeatureVector fv = extract_features(cloud, normals, invalid_only);
  for (double v : fv.values) CHECK(v == 0.0);
}

TEST_CASE("detect_stub without inflation or jitter returns the exact silhouette box") {
  const RackModel rack = mid_rack();
  SceneObject obj = make_object(
      "crayola_24_ct", upright_item_pose(rack, 4, item_spec("crayola_24_ct").shape, 0.0, 0.4, 0.5));
  const RenderedBin rendered =
      render_bin_cloud(rack, 4, {obj}, bin_view_camera_pose(rack, 4), RenderSettings::noiseless());

  DetectSettings exact;
  exact.inflation = 0.0;
  exact.jitter_px = 0.0;
  const Detection d = detect_stub(rendered, {obj}, "crayola_24_ct", exact);
  const PixelRect truth = silhouette_of(rendered, 0);
  CHECK(d.box.x0 == truth.x0);
  CHECK(d.box.y0 == truth.y0);
  CHECK(d.box.x1 == truth.x1);
  CHECK(d.box.y1 == truth.y1);
  CHECK(d.item_id == "crayola_24_ct");
  CHECK(d.score > 0.0);
  CHECK(d.score <= 1.0);
}

TEST_CASE("detect_stub boxes always contain the true silhouette") {
  const RackModel rack = mid_rack();
  SceneObject obj = make_object(
      "white_lightbulb", upright_item_pose(rack, 4, item_spec("white_lightbulb").shape, 0.0, 0.45, 0.2));
  const RenderedBin rendered =
      render_bin_cloud(rack, 4, {obj}, bin_view_camera_pose(rack, 4), RenderSettings::noiseless());
  const PixelRect truth = silhouette_of(rendered, 0);
  REQUIRE(truth.width() >= 8);   // the default inflation then dominates the jitter
  REQUIRE(truth.height() >= 8);

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    DetectSettings settings;  // inflation 0.25, jitter 2 px
    settings.seed = seed;
    const Detection d = detect_stub(rendered, {obj}, "white_lightbulb", settings);
    CAPTURE(seed);
    CHECK(d.box.x0 <= truth.x0);
    CHECK(d.box.y0 <= truth.y0);
    CHECK(d.box.x1 >= truth.x1);
    CHECK(d.box.y1 >= truth.y1);
  }
}

TEST_CASE("detect_stub throws for absent or fully hidden items") {
  const RackModel rack = mid_rack();
  const RenderedBin empty =
      render_bin_cloud(rack, 4, {}, bin_view_camera_pose(rack, 4), RenderSettings::noiseless());
  CHECK_THROWS_AS((void)detect_stub(empty, {}, "crayola_24_ct", {}), ItemAbsentError);

  // Pushed past the back panel: present in the scene list, never rendered.
  SceneObject hidden = make_object(
      "crayola_24_ct", upright_item_pose(rack, 4, item_spec("crayola_24_ct").shape, 0.0, 1.5, 0.0));
  const RenderedBin rendered =
      render_bin_cloud(rack, 4, {hidden}, bin_view_camera_pose(rack, 4), RenderSettings::noiseless());
  CHECK_THROWS_AS((void)detect_stub(rendered, {hidden}, "crayola_24_ct", {}), ItemAbsentError);
}

TEST_CASE("train_forest separates disjoint clusters out of sample") {
  ts::Rng rng(508);
  std::vector<FeatureVector> pos, neg, pos_test, neg_test;
  for (int i = 0; i < 400; ++i) {
    pos.push_back(synthetic_feature(rng, true));
    neg.push_back(synthetic_feature(rng, false));
  }
  for (int i = 0; i < 250; ++i) {
    pos_test.push_back(synthetic_feature(rng, true));
    neg_test.push_back(synthetic_feature(rng, false));
  }

  const RandomForest forest = train_forest(pos, neg, 30, 12, 509);
  int correct_oos = 0;
  for (const auto& fv : pos_test) correct_oos += forest.predict(fv) > 0.5 ? 1 : 0;
  for (const auto& fv : neg_test) correct_oos += forest.predict(fv) < 0.5 ? 1 : 0;
  CHECK(static_cast<double>(correct_oos) / 500.0 >= 0.95);

  int correct_in = 0;
  for (const auto& fv : pos) correct_in += forest.predict(fv) > 0.5 ? 1 : 0;
  for (const auto& fv : neg) correct_in += forest.predict(fv) < 0.5 ? 1 : 0;
  CHECK(static_cast<double>(correct_in) / 800.0 >= 0.99);
}

TEST_CASE("a single stump finds the one informative feature") {
  ts::Rng rng(510);
  std::vector<FeatureVector> pos, neg;
  for (int i = 0; i < 100; ++i) {
    FeatureVector p, n;
    for (int f = 0; f < FeatureVector::kSize; ++f) {
      const double shared = ts::urand(rng, 0.0, 1.0);
      p.values[f] = shared;
      n.values[f] = shared;
    }
    p.values[7] = ts::urand(rng, 0.7, 1.0);
    n.values[7] = ts::urand(rng, 0.0, 0.3);
    pos.push_back(p);
    neg.push_back(n);
  }
  const RandomForest forest = train_forest(pos, neg, 1, 1, 1);
  REQUIRE(forest.trees.size() == 1);
  REQUIRE_FALSE(forest.trees[0].nodes.empty());
  CHECK(forest.trees[0].nodes[0].feature == 7);
  CHECK(forest.trees[0].nodes[0].threshold > 0.3);
  CHECK(forest.trees[0].nodes[0].threshold < 0.7);
}

TEST_CASE("forests are deterministic and structurally sound") {
  ts::Rng rng(511);
  std::vector<FeatureVector> pos, neg;
  for (int i = 0; i < 80; ++i) {
    pos.push_back(synthetic_feature(rng, true));
    neg.push_back(synthetic_feature(rng, false));
  }
  const RandomForest a = train_forest(pos, neg, 10, 6, 42);
  const RandomForest b = train_forest(pos, neg, 10, 6, 42);
  REQUIRE(a.trees.size() == b.trees.size());
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
    for (std::size_t n = 0; n < a.trees[t].nodes.size(); ++n) {
      CHECK(a.trees[t].nodes[n].feature == b.trees[t].nodes[n].feature);
      CHECK(a.trees[t].nodes[n].threshold == b.trees[t].nodes[n].threshold);
      CHECK(a.trees[t].nodes[n].left == b.trees[t].nodes[n].left);
      CHECK(a.trees[t].nodes[n].right == b.trees[t].nodes[n].right);
    }
  }

  // Every node is either a leaf with a probability or an internal split
  // with valid children.
  for (const DecisionTree& tree : a.trees) {
    for (const TreeNode& node : tree.nodes) {
      if (node.feature < 0) {
        CHECK(node.probability >= 0.0);
        CHECK(node.probability <= 1.0);
      } else {
        CHECK(node.feature < FeatureVector::kSize);
        CHECK(node.left >= 0);
        CHECK(node.left < static_cast<int>(tree.nodes.size()));
        CHECK(node.right >= 0);
        CHECK(node.right < static_cast<int>(tree.nodes.size()));
      }
    }
  }
}

TEST_CASE("classify_pixels marks the ROI and flags unusable pixels") {
  const RackModel rack = mid_rack();
  const std::string item = "crayola_24_ct";
  SceneObject obj =
      make_object(item, upright_item_pose(rack, 4, item_spec(item).shape, 0.0, 0.4, 0.3));
  const RenderedBin rendered =
      render_bin_cloud(rack, 4, {obj}, bin_view_camera_pose(rack, 4), RenderSettings::noiseless());
  const auto normals = estimate_normals(rendered.cloud, 16);

  PerceptionSettings settings;
  settings.tree_count = 20;
  settings.forest_depth = 10;
  ForestLibrary library(rack, settings);
  const RandomForest& forest = library.forest_for(item);

  DetectSettings exact;
  exact.inflation = 0.1;
  exact.jitter_px = 0.0;
  const Detection d = detect_stub(rendered, {obj}, item, exact);
  const ProbabilityMap map = classify_pixels(forest, rendered, normals, d);

  CHECK(map.roi.x0 == std::max(0, d.box.x0));
  CHECK(map.roi.y0 == std::max(0, d.box.y0));
  REQUIRE(map.values.size() ==
          static_cast<std::size_t>(map.roi.width()) * map.roi.height());
  int flagged = 0;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    CHECK(map.values[i] >= 0.0);
    CHECK(map.values[i] <= 1.0);
    if (!map.flags[i]) CHECK(map.values[i] == 0.0);
    flagged += map.flags[i];
  }
  CHECK(flagged > 0);

  Detection outside = d;
  outside.box = {-50, -50, -10, -10};
  CHECK_THROWS_AS((void)classify_pixels(forest, rendered, normals, outside),
                  std::invalid_argument);
}

TEST_CASE("mean shift lands on the density argmax of a smooth blob") {
  ProbabilityMap map;
  map.roi = {10, 20, 70, 80};
  map.values.assign(61 * 61, 0.0);
  map.flags.assign(61 * 61, 1);
  const Eigen::Vector2d peak(40.3, 45.6);
  for (int y = map.roi.y0; y <= map.roi.y1; ++y) {
    for (int x = map.roi.x0; x <= map.roi.x1; ++x) {
      const double d2 = (Eigen::Vector2d(x, y) - peak).squaredNorm();
      map.values[map.index(x, y)] = 0.95 * std::exp(-d2 / (2.0 * 8.0 * 8.0));
    }
  }
  const ModeResult mode = mean_shift_mode(map, 25.0);
  const Eigen::Vector2d oracle = kde_argmax(map, 5.0);
  CHECK((mode.pixel - oracle).norm() <= 2.0);
  CHECK((mode.pixel - peak).norm() <= 2.0);
  CHECK(mode.confidence > 0.5);
}

TEST_CASE("mean shift on a uniform patch returns its centroid") {
  ProbabilityMap map;
  map.roi = {0, 0, 30, 30};
  map.values.assign(31 * 31, 0.0);
  map.flags.assign(31 * 31, 1);
  for (int y = 8; y <= 18; ++y) {
    for (int x = 12; x <= 22; ++x) map.values[map.index(x, y)] = 0.8;
  }
  const ModeResult mode = mean_shift_mode(map, 20.0);
  CHECK((mode.pixel - Eigen::Vector2d(17.0, 13.0)).norm() <= 1.0);
  CHECK(mode.confidence == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("mean shift follows the heavy mode of a bimodal map") {
  ProbabilityMap map;
  map.roi = {0, 0, 79, 39};
  map.values.assign(80 * 40, 0.0);
  map.flags.assign(80 * 40, 1);
  for (int y = 14; y <= 26; ++y) {  // heavy blob around (16, 20)
    for (int x = 10; x <= 22; ++x) map.values[map.index(x, y)] = 0.9;
  }
  for (int y = 18; y <= 22; ++y) {  // light blob around (66, 20)
    for (int x = 64; x <= 68; ++x) map.values[map.index(x, y)] = 0.6;
  }
  const ModeResult mode = mean_shift_mode(map, 25.0);
  CHECK((mode.pixel - Eigen::Vector2d(16.0, 20.0)).norm() <= 2.0);
  CHECK(mode.confidence > 0.8);
}

TEST_CASE("mean shift validates its inputs and its evidence") {
  ProbabilityMap map;
  map.roi = {0, 0, 9, 9};
  map.values.assign(100, 0.3);  // nothing above threshold
  map.flags.assign(100, 1);
  CHECK_THROWS_AS((void)mean_shift_mode(map, 10.0), NoEvidenceError);
  map.values.assign(100, 0.9);
  CHECK_THROWS_AS((void)mean_shift_mode(map, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)mean_shift_mode(map, 10.0, 1.5), std::invalid_argument);
}

TEST_CASE("suction_target reads the cloud at the mode pixel") {
  const Eigen::Vector3d center(0.0, 0.0, 0.4);
  const double radius = 0.05;
  const PointCloud cloud = sphere_cap_cloud(center, radius);
  const auto normals = estimate_normals(cloud, 12);
  const std::vector<int> region = valid_region(cloud);

  const int cx = 20, cy = 20;  // center pixel of the 41x41 cap
  REQUIRE(cloud.valid[cloud.index(cx, cy)] == 1);
  const SuctionTarget target =
      suction_target(cloud, normals, Eigen::Vector2d(cx, cy), region, 0.77);

  CHECK((target.point - cloud.points[cloud.index(cx, cy)]).norm() == 0.0);
  CHECK(target.confidence == 0.77);

  // Patch normal within 2 degrees of the exact radial direction.
  const Eigen::Vector3d exact = (target.point - center).normalized();
  CHECK(std::acos(std::min(1.0, std::abs(target.normal.dot(exact)))) <= 2.0 * M_PI / 180.0);

  // Centroid is the region mean; for a spherical cap it sits roughly r/2
  // in front of the center.
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (int i : region) mean += cloud.points[i];
  mean /= static_cast<double>(region.size());
  CHECK((target.centroid - mean).norm() <= 1e-12);
  CHECK((target.centroid - center).norm() > 0.3 * radius);
  CHECK((target.centroid - center).norm() < 0.8 * radius);
}

TEST_CASE("suction_target rejects unusable mode pixels") {
  const PointCloud cloud = sphere_cap_cloud({0.0, 0.0, 0.4}, 0.05);
  const auto normals = estimate_normals(cloud, 12);
  const std::vector<int> region = valid_region(cloud);
  CHECK_THROWS_AS((void)suction_target(cloud, normals, {-5.0, 3.0}, region, 1.0),
                  InvalidDepthError);
  CHECK_THROWS_AS((void)suction_target(cloud, normals, {0.0, 0.0}, region, 1.0),
                  InvalidDepthError);  // corner pixel misses the sphere
  CHECK_THROWS_AS((void)suction_target(cloud, normals, {20.0, 20.0}, {}, 1.0),
                  std::invalid_argument);
}

TEST_CASE("upright_item_pose stands the item on the bin floor") {
  const RackModel rack = mid_rack();
  const RackPlane& plane = rack.config.plane;
  const Shape shape = Shape::box({0.05, 0.04, 0.12});
  const int bin = 4;  // row 1, col 1
  const double u_offset = 0.02;
  const double depth_fraction = 0.4;

  const RigidTransform pose = upright_item_pose(rack, bin, shape, u_offset, depth_fraction, 0.0);

  const double floor_v = rack.corners[1][1].y() + 0.5 * rack.config.wall_thickness_m;
  const Eigen::Vector3d expected =
      plane.lift({rack.bin_centers_2d[bin].x() + u_offset, floor_v}) +
      0.5 * shape.extents.z() * plane.e_v + depth_fraction * rack.config.depth_m * plane.normal();
  CHECK((pose.translation - expected).norm() <= 1e-12);
  CHECK((pose.rotation.col(2) - plane.e_v).norm() <= 1e-12);
  CHECK((pose.rotation.col(0) - plane.normal()).norm() <= 1e-12);
  CHECK(is_valid_rotation(pose.rotation, 1e-12));

  // A quarter-turn yaw about rack-up carries the local x onto e_u.
  const RigidTransform yawed = upright_item_pose(rack, bin, shape, 0.0, 0.4, M_PI / 2.0);
  CHECK((yawed.rotation.col(2) - plane.e_v).norm() <= 1e-12);
  CHECK((yawed.rotation.col(0) - plane.e_u).norm() <= 1e-9);

  // Spheres rest on their radius.
  const Shape ball = Shape::sphere(0.03);
  const RigidTransform ball_pose = upright_item_pose(rack, bin, ball, 0.0, 0.4, 0.0);
  const double height_above_floor = (ball_pose.translation - plane.lift({0.0, floor_v}))
                                        .dot(plane.e_v);
  CHECK(height_above_floor == doctest::Approx(0.03).epsilon(1e-9));
}

TEST_CASE("located suction points sit on the true item surface") {
  const RackModel rack = mid_rack();
  PerceptionSettings settings;
  settings.tree_count = 40;
  settings.forest_depth = 12;
  ForestLibrary library(rack, settings);

  const std::vector<std::string> items = {"crayola_24_ct", "rawlings_baseball"};
  const std::array<double, 3> offsets = {-0.02, 0.0, 0.025};
  const std::array<double, 2> depths = {0.35, 0.5};

  int attempts = 0;
  int on_surface = 0;
  for (const std::string& item : items) {
    for (double u_offset : offsets) {
      for (double depth : depths) {
        const int bin = 4;
        const SceneObject obj = make_object(
            item, upright_item_pose(rack, bin, item_spec(item).shape, u_offset, depth,
                                    0.4 * attempts));
        RenderSettings rs = RenderSettings::noiseless();
        rs.seed = 600 + attempts;
        const RenderedBin rendered =
            render_bin_cloud(rack, bin, {obj}, bin_view_camera_pose(rack, bin), rs);
        ++attempts;
        try {
          const PerceptionOutcome outcome =
              locate_suction_target(rendered, {obj}, item, library, settings);
          const Eigen::Vector3d p_robot = rendered.camera_pose.apply(outcome.target.point);
          const double gap = ts::shape_surface_distance(obj.shape, obj.pose, p_robot);
          if (gap <= 0.005) ++on_surface;
          CHECK(outcome.detection.item_id == item);
          const int mx = static_cast<int>(std::lround(outcome.mode.pixel.x()));
          const int my = static_cast<int>(std::lround(outcome.mode.pixel.y()));
          CHECK(outcome.mode_index == static_cast<int>(rendered.cloud.index(mx, my)));
        } catch (const std::exception&) {
          // counted as a miss below
        }
      }
    }
  }
  REQUIRE(attempts == 12);
  CHECK(on_surface >= 10);
}

TEST_CASE("cloud and probability map dumps are well-formed") {
  const PointCloud cloud = sphere_cap_cloud({0.0, 0.0, 0.4}, 0.05, 11);
  const std::string ascii = cloud_to_ascii(cloud);
  CHECK(ascii.rfind("# width 11 height 11", 0) == 0);
  CHECK(std::count(ascii.begin(), ascii.end(), '\n') == 11 * 11 + 1);

  ProbabilityMap map;
  map.roi = {2, 3, 5, 6};
  map.values.assign(16, 0.5);
  map.flags.assign(16, 1);
  const std::string pgm = probability_map_to_pgm(map);
  CHECK(pgm.rfind("P2\n4 4\n255\n", 0) == 0);
  CHECK(pgm.find("128") != std::string::npos);
}

TEST_CASE("bin scene JSON round trip keeps objects and camera pose") {
  ts::Rng rng(512);
  BinScene scene;
  scene.noise_sigma_m = 0.001;
  scene.camera_pose = RigidTransform{ts::random_rotation(rng), ts::random_point(rng, 0.5)};
  scene.objects.push_back(make_object("rawlings_baseball",
                                      {ts::random_rotation(rng), ts::random_point(rng, 0.4)}));
  scene.objects.push_back(make_object("crayola_24_ct",
                                      {ts::random_rotation(rng), ts::random_point(rng, 0.4)}));

  const BinScene back = bin_scene_from_json(bin_scene_to_json(scene));
  CHECK(back.noise_sigma_m == scene.noise_sigma_m);
  REQUIRE(back.camera_pose.has_value());
  CHECK((back.camera_pose->rotation - scene.camera_pose->rotation).cwiseAbs().maxCoeff() <= 1e-12);
  REQUIRE(back.objects.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.objects[i].id == scene.objects[i].id);
    CHECK(back.objects[i].shape.kind == scene.objects[i].shape.kind);
    CHECK((back.objects[i].pose.translation - scene.objects[i].pose.translation).norm() <= 1e-12);
    CHECK((back.objects[i].base_color - scene.objects[i].base_color).norm() <= 1e-12);
    CHECK(back.objects[i].deformable_flag == scene.objects[i].deformable_flag);
  }

  BinScene bare;
  bare.objects.push_back(make_object("pencils", RigidTransform::identity()));
  const BinScene bare_back = bin_scene_from_json(bin_scene_to_json(bare));
  CHECK_FALSE(bare_back.camera_pose.has_value());
}

TEST_CASE("the item catalog is consistent and queryable") {
  const auto& catalog = item_catalog();
  CHECK(catalog.size() == 40);
  for (const ItemSpec& spec : catalog) {
    CHECK(is_catalog_item(spec.name));
    CHECK(item_spec(spec.name).name == spec.name);
    CHECK((spec.color.array() >= 0.0).all());
    CHECK((spec.color.array() <= 1.0).all());
  }
  CHECK_FALSE(is_catalog_item("not_a_real_item"));
  CHECK_THROWS_AS((void)item_spec("not_a_real_item"), std::out_of_range);

  const SceneObject obj = make_object("dasani_bottle", RigidTransform::identity());
  CHECK(obj.id == "dasani_bottle");
  CHECK(obj.shape.kind == ShapeKind::Cylinder);
  CHECK_THROWS_AS((void)make_object("not_a_real_item", RigidTransform::identity()),
                  std::out_of_range);
}
