#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "pickstow/geometry.hpp"

namespace pickstow {

enum class ShapeKind { Box, Cylinder, Sphere };

// Local frames: box centered at the origin with full side lengths
// `extents`; cylinder centered with its axis along local +z; sphere
// centered at the origin.
struct Shape {
  ShapeKind kind = ShapeKind::Box;
  Eigen::Vector3d extents = Eigen::Vector3d::Constant(0.05);
  double radius = 0.03;
  double height = 0.10;

  static Shape box(const Eigen::Vector3d& extents);
  static Shape cylinder(double radius, double height);
  static Shape sphere(double radius);
};

struct SceneObject {
  std::string id;
  Shape shape;
  RigidTransform pose;  // local -> robot base frame
  Eigen::Vector3d base_color = Eigen::Vector3d::Constant(0.5);
  bool deformable_flag = false;
};

struct RayHit {
  double t = 0.0;
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();  // outward, world frame
};

// Nearest forward intersection (t > 1e-9) of the ray origin + t * dir, dir
// unit length. A ray starting inside the solid reports the exit surface.
std::optional<RayHit> ray_shape(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                const Shape& shape, const RigidTransform& pose);
std::optional<RayHit> ray_aabb_hit(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                   const Aabb& box);

// Unsigned distance from p to the object's surface; optionally the outward
// normal at the closest surface point.
double surface_distance(const Shape& shape, const RigidTransform& pose, const Eigen::Vector3d& p,
                        Eigen::Vector3d* normal_out = nullptr);

// Radius of the largest disk around the closest surface point to p that
// stays on one sealable face: distance to the face boundary for flat faces,
// capped by the radius of curvature on curved ones. Decides suction seals.
double edge_clearance(const Shape& shape, const RigidTransform& pose, const Eigen::Vector3d& p);

Aabb object_aabb(const SceneObject& object);

struct ItemSpec {
  std::string name;
  Shape shape;
  Eigen::Vector3d color;
  bool deformable = false;
};

// The 40-item catalog used by the simulated tasks.
const std::vector<ItemSpec>& item_catalog();
const ItemSpec& item_spec(const std::string& name);  // throws std::out_of_range
bool is_catalog_item(const std::string& name);

SceneObject make_object(const std::string& item_name, const RigidTransform& pose);

nlohmann::json scene_object_to_json(const SceneObject& object);
SceneObject scene_object_from_json(const nlohmann::json& j);

nlohmann::json transform_to_json(const RigidTransform& pose);
RigidTransform transform_from_json(const nlohmann::json& j);

}  // namespace pickstow
