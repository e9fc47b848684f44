#include "pickstow/scene.hpp"

#include <cmath>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace pickstow {

namespace {

constexpr double kRayEps = 1e-9;

void validate_shape(const Shape& s) {
  switch (s.kind) {
    case ShapeKind::Box:
      if (!(s.extents.minCoeff() > 0.0)) throw std::invalid_argument("box extents must be positive");
      break;
    case ShapeKind::Cylinder:
      if (!(s.radius > 0.0) || !(s.height > 0.0)) {
        throw std::invalid_argument("cylinder dimensions must be positive");
      }
      break;
    case ShapeKind::Sphere:
      if (!(s.radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
      break;
  }
}

std::optional<RayHit> ray_local_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                    const Eigen::Vector3d& half) {
  double t_lo = -std::numeric_limits<double>::infinity();
  double t_hi = std::numeric_limits<double>::infinity();
  int enter_axis = -1;
  int exit_axis = -1;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (std::abs(o[i]) > half[i]) return std::nullopt;
      continue;
    }
    double ta = (-half[i] - o[i]) / d[i];
    double tb = (half[i] - o[i]) / d[i];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t_lo) {
      t_lo = ta;
      enter_axis = i;
    }
    if (tb < t_hi) {
      t_hi = tb;
      exit_axis = i;
    }
  }
  if (t_lo > t_hi || t_hi <= kRayEps) return std::nullopt;
  RayHit hit;
  if (t_lo > kRayEps) {
    hit.t = t_lo;
    hit.normal = Eigen::Vector3d::Zero();
    hit.normal[enter_axis] = d[enter_axis] > 0.0 ? -1.0 : 1.0;
  } else {
    hit.t = t_hi;
    hit.normal = Eigen::Vector3d::Zero();
    hit.normal[exit_axis] = d[exit_axis] > 0.0 ? 1.0 : -1.0;
  }
  return hit;
}

std::optional<RayHit> ray_local_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                       double r) {
  double b = o.dot(d);
  double c = o.squaredNorm() - r * r;
  double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  double root = std::sqrt(disc);
  double t = -b - root;
  if (t <= kRayEps) t = -b + root;
  if (t <= kRayEps) return std::nullopt;
  Eigen::Vector3d p = o + t * d;
  return RayHit{t, p.normalized()};
}

std::optional<RayHit> ray_local_cylinder(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                         double r, double h) {
  const double hz = 0.5 * h;
  double best_t = std::numeric_limits<double>::infinity();
  Eigen::Vector3d best_n = Eigen::Vector3d::UnitZ();

  double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    double b = o.x() * d.x() + o.y() * d.y();
    double c = o.x() * o.x() + o.y() * o.y() - r * r;
    double disc = b * b - a * c;
    if (disc >= 0.0) {
      double root = std::sqrt(disc);
      for (double t : {(-b - root) / a, (-b + root) / a}) {
        if (t <= kRayEps || t >= best_t) continue;
        double z = o.z() + t * d.z();
        if (std::abs(z) <= hz) {
          best_t = t;
          Eigen::Vector3d p = o + t * d;
          best_n = Eigen::Vector3d(p.x(), p.y(), 0.0).normalized();
        }
      }
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    for (double cap : {-hz, hz}) {
      double t = (cap - o.z()) / d.z();
      if (t <= kRayEps || t >= best_t) continue;
      Eigen::Vector3d p = o + t * d;
      if (p.x() * p.x() + p.y() * p.y() <= r * r) {
        best_t = t;
        best_n = Eigen::Vector3d(0.0, 0.0, cap > 0.0 ? 1.0 : -1.0);
      }
    }
  }
  if (!std::isfinite(best_t)) return std::nullopt;
  return RayHit{best_t, best_n};
}

struct SurfacePoint {
  double distance = 0.0;
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();  // local frame
  double clearance = 0.0;
};

SurfacePoint closest_surface_local(const Shape& shape, const Eigen::Vector3d& q) {
  SurfacePoint sp;
  switch (shape.kind) {
    case ShapeKind::Box: {
      Eigen::Vector3d half = 0.5 * shape.extents;
      Eigen::Vector3d clamped = q.cwiseMax(-half).cwiseMin(half);
      if ((q - clamped).norm() > 1e-15) {
        sp.distance = (q - clamped).norm();
        // face, edge or corner contact; the face axis dominates when unique
        Eigen::Vector3d delta = q - clamped;
        sp.normal = delta.normalized();
      } else {
        int face_axis = 0;
        double face_gap = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 3; ++i) {
          double gap = half[i] - std::abs(q[i]);
          if (gap < face_gap) {
            face_gap = gap;
            face_axis = i;
          }
        }
        sp.distance = face_gap;
        sp.normal = Eigen::Vector3d::Zero();
        sp.normal[face_axis] = q[face_axis] >= 0.0 ? 1.0 : -1.0;
        clamped = q;
        clamped[face_axis] = std::copysign(half[face_axis], q[face_axis]);
      }
      // in-face distance from the contact point to the face boundary
      int axis = 0;
      sp.normal.cwiseAbs().maxCoeff(&axis);
      sp.clearance = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 3; ++i) {
        if (i == axis) continue;
        sp.clearance = std::min(sp.clearance, half[i] - std::abs(clamped[i]));
      }
      sp.clearance = std::max(0.0, sp.clearance);
      break;
    }
    case ShapeKind::Sphere: {
      double n = q.norm();
      sp.distance = std::abs(n - shape.radius);
      sp.normal = n > 1e-12 ? Eigen::Vector3d(q / n) : Eigen::Vector3d::UnitZ();
      sp.clearance = shape.radius;  // curvature-limited, no edges
      break;
    }
    case ShapeKind::Cylinder: {
      const double hz = 0.5 * shape.height;
      const double rho = std::hypot(q.x(), q.y());
      Eigen::Vector3d radial =
          rho > 1e-12 ? Eigen::Vector3d(q.x() / rho, q.y() / rho, 0.0) : Eigen::Vector3d::UnitX();
      double dr = rho - shape.radius;
      double dz = std::abs(q.z()) - hz;
      Eigen::Vector3d cap_n(0.0, 0.0, q.z() >= 0.0 ? 1.0 : -1.0);
      if (dr <= 0.0 && dz <= 0.0) {
        // inside: nearest of side wall and caps
        if (-dr < -dz) {
          sp.distance = -dr;
          sp.normal = radial;
          sp.clearance = std::min(shape.radius, hz - std::abs(q.z()));
        } else {
          sp.distance = -dz;
          sp.normal = cap_n;
          sp.clearance = shape.radius - rho;
        }
      } else if (dz <= 0.0) {
        sp.distance = dr;
        sp.normal = radial;
        sp.clearance = std::min(shape.radius, hz - std::abs(q.z()));
      } else if (dr <= 0.0) {
        sp.distance = dz;
        sp.normal = cap_n;
        sp.clearance = shape.radius - rho;
      } else {
        sp.distance = std::hypot(dr, dz);
        sp.normal = (dr * radial + dz * cap_n).normalized();
        sp.clearance = 0.0;  // rim contact
      }
      break;
    }
  }
  return sp;
}

}  // namespace

Shape Shape::box(const Eigen::Vector3d& extents) {
  Shape s;
  s.kind = ShapeKind::Box;
  s.extents = extents;
  validate_shape(s);
  return s;
}

Shape Shape::cylinder(double radius, double height) {
  Shape s;
  s.kind = ShapeKind::Cylinder;
  s.radius = radius;
  s.height = height;
  validate_shape(s);
  return s;
}

Shape Shape::sphere(double radius) {
  Shape s;
  s.kind = ShapeKind::Sphere;
  s.radius = radius;
  validate_shape(s);
  return s;
}

std::optional<RayHit> ray_shape(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                const Shape& shape, const RigidTransform& pose) {
  Eigen::Vector3d o = pose.rotation.transpose() * (origin - pose.translation);
  Eigen::Vector3d d = pose.rotation.transpose() * dir;
  std::optional<RayHit> hit;
  switch (shape.kind) {
    case ShapeKind::Box:
      hit = ray_local_box(o, d, 0.5 * shape.extents);
      break;
    case ShapeKind::Sphere:
      hit = ray_local_sphere(o, d, shape.radius);
      break;
    case ShapeKind::Cylinder:
      hit = ray_local_cylinder(o, d, shape.radius, shape.height);
      break;
  }
  if (hit) hit->normal = pose.rotation * hit->normal;
  return hit;
}

std::optional<RayHit> ray_aabb_hit(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                   const Aabb& box) {
  Eigen::Vector3d center = box.center();
  return ray_local_box(origin - center, dir, 0.5 * (box.max - box.min));
}

double surface_distance(const Shape& shape, const RigidTransform& pose, const Eigen::Vector3d& p,
                        Eigen::Vector3d* normal_out) {
  SurfacePoint sp = closest_surface_local(shape, pose.rotation.transpose() * (p - pose.translation));
  if (normal_out) *normal_out = pose.rotation * sp.normal;
  return sp.distance;
}

double edge_clearance(const Shape& shape, const RigidTransform& pose, const Eigen::Vector3d& p) {
  return closest_surface_local(shape, pose.rotation.transpose() * (p - pose.translation)).clearance;
}

Aabb object_aabb(const SceneObject& object) {
  Eigen::Vector3d half;
  switch (object.shape.kind) {
    case ShapeKind::Box:
      half = 0.5 * object.shape.extents;
      break;
    case ShapeKind::Sphere:
      half = Eigen::Vector3d::Constant(object.shape.radius);
      break;
    case ShapeKind::Cylinder:
      half = Eigen::Vector3d(object.shape.radius, object.shape.radius, 0.5 * object.shape.height);
      break;
  }
  // AABB of the oriented box that bounds the shape
  Eigen::Vector3d world_half = object.pose.rotation.cwiseAbs() * half;
  return {object.pose.translation - world_half, object.pose.translation + world_half};
}

const std::vector<ItemSpec>& item_catalog() {
  static const std::vector<ItemSpec> catalog = {
      {"barkely_bones", Shape::box({0.04, 0.10, 0.06}), {0.82, 0.70, 0.55}, false},
      {"bunny_book", Shape::box({0.02, 0.11, 0.09}), {0.95, 0.55, 0.20}, false},
      {"cherokee_tshirt", Shape::box({0.03, 0.10, 0.08}), {0.20, 0.65, 0.35}, true},
      {"clorox_brush", Shape::cylinder(0.025, 0.11), {0.75, 0.85, 0.95}, false},
      {"cloud_bear", Shape::box({0.05, 0.08, 0.06}), {0.65, 0.80, 0.95}, true},
      {"command_hooks", Shape::box({0.02, 0.05, 0.09}), {0.95, 0.93, 0.88}, false},
      {"crayola_24_ct", Shape::box({0.03, 0.10, 0.07}), {0.95, 0.85, 0.15}, false},
      {"creativity_stems", Shape::box({0.02, 0.04, 0.12}), {0.60, 0.30, 0.70}, true},
      {"dasani_bottle", Shape::cylinder(0.03, 0.12), {0.25, 0.45, 0.85}, false},
      {"easter_sippy_cup", Shape::cylinder(0.035, 0.09), {0.90, 0.55, 0.70}, false},
      {"elmers_school_glue", Shape::cylinder(0.025, 0.10), {0.95, 0.70, 0.35}, false},
      {"expo_eraser", Shape::box({0.03, 0.05, 0.10}), {0.20, 0.25, 0.60}, false},
      {"fitness_dumbell", Shape::cylinder(0.03, 0.12), {0.25, 0.25, 0.28}, false},
      {"folgers_coffee", Shape::cylinder(0.045, 0.10), {0.80, 0.15, 0.15}, false},
      {"glucose_up_bottle", Shape::cylinder(0.03, 0.11), {0.95, 0.50, 0.10}, false},
      {"jane_dvd", Shape::box({0.015, 0.12, 0.10}), {0.30, 0.20, 0.35}, false},
      {"jumbo_pencil_cup", Shape::cylinder(0.04, 0.10), {0.15, 0.15, 0.18}, false},
      {"kleenex_towels", Shape::cylinder(0.055, 0.11), {0.93, 0.90, 0.88}, false},
      {"kygen_puppies", Shape::box({0.05, 0.09, 0.07}), {0.85, 0.60, 0.25}, true},
      {"laugh_joke_book", Shape::box({0.02, 0.10, 0.07}), {0.95, 0.80, 0.25}, false},
      {"pencils", Shape::box({0.02, 0.05, 0.11}), {0.90, 0.70, 0.10}, false},
      {"platinum_bowl", Shape::cylinder(0.055, 0.05), {0.70, 0.72, 0.75}, false},
      {"rawlings_baseball", Shape::sphere(0.037), {0.92, 0.88, 0.82}, false},
      {"safety_plugs", Shape::box({0.02, 0.06, 0.08}), {0.90, 0.90, 0.85}, false},
      {"scotch_tape", Shape::cylinder(0.035, 0.06), {0.30, 0.70, 0.40}, false},
      {"staples_cards", Shape::box({0.03, 0.09, 0.06}), {0.80, 0.85, 0.92}, false},
      {"viva", Shape::cylinder(0.055, 0.11), {0.95, 0.90, 0.60}, false},
      {"white_lightbulb", Shape::box({0.06, 0.06, 0.11}), {0.94, 0.92, 0.86}, false},
      {"woods_cord", Shape::box({0.04, 0.10, 0.08}), {0.25, 0.55, 0.30}, false},
      {"dove_beauty_bar", Shape::box({0.03, 0.09, 0.06}), {0.93, 0.88, 0.75}, false},
      {"dr_browns_bottle_brush", Shape::box({0.04, 0.05, 0.12}), {0.60, 0.75, 0.90}, false},
      {"fiskars_scissors", Shape::box({0.015, 0.05, 0.11}), {0.90, 0.25, 0.15}, false},
      {"hanes_tube_socks", Shape::box({0.05, 0.10, 0.08}), {0.92, 0.92, 0.92}, true},
      {"kleenex_tissue_box", Shape::box({0.05, 0.11, 0.06}), {0.70, 0.85, 0.90}, false},
      {"oral_b_toothbrush", Shape::box({0.02, 0.04, 0.12}), {0.20, 0.70, 0.70}, false},
      {"peva_shower_curtain", Shape::box({0.04, 0.10, 0.08}), {0.75, 0.85, 0.95}, true},
      {"scotch_bubble_mailer", Shape::box({0.02, 0.12, 0.09}), {0.85, 0.75, 0.55}, true},
      {"cool_shot_glue_sticks", Shape::box({0.02, 0.05, 0.09}), {0.40, 0.80, 0.90}, false},
      {"womens_knit_gloves", Shape::box({0.03, 0.09, 0.07}), {0.55, 0.15, 0.20}, true},
      {"duct_tape_roll", Shape::cylinder(0.05, 0.07), {0.55, 0.55, 0.58}, false},
  };
  return catalog;
}

const ItemSpec& item_spec(const std::string& name) {
  static const std::unordered_map<std::string, const ItemSpec*> index = [] {
    std::unordered_map<std::string, const ItemSpec*> m;
    for (const auto& item : item_catalog()) m.emplace(item.name, &item);
    return m;
  }();
  auto it = index.find(name);
  if (it == index.end()) {
    throw std::out_of_range("unknown catalog item: " + name);
  }
  return *it->second;
}

bool is_catalog_item(const std::string& name) {
  for (const auto& item : item_catalog()) {
    if (item.name == name) return true;
  }
  return false;
}

SceneObject make_object(const std::string& item_name, const RigidTransform& pose) {
  const ItemSpec& spec = item_spec(item_name);
  SceneObject obj;
  obj.id = spec.name;
  obj.shape = spec.shape;
  obj.pose = pose;
  obj.base_color = spec.color;
  obj.deformable_flag = spec.deformable;
  return obj;
}

nlohmann::json transform_to_json(const RigidTransform& pose) {
  Eigen::Matrix4d m = pose.matrix();
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < 4; ++i) rows.push_back({m(i, 0), m(i, 1), m(i, 2), m(i, 3)});
  return rows;
}

RigidTransform transform_from_json(const nlohmann::json& j) {
  if (j.size() != 4) throw std::invalid_argument("pose must be a 4x4 matrix");
  Eigen::Matrix4d m;
  for (int i = 0; i < 4; ++i) {
    if (j[i].size() != 4) throw std::invalid_argument("pose must be a 4x4 matrix");
    for (int k = 0; k < 4; ++k) m(i, k) = j[i][k].get<double>();
  }
  RigidTransform pose = RigidTransform::from_matrix(m);
  if (!pose.is_valid_rotation(1e-6)) {
    throw std::invalid_argument("pose rotation block is not a proper rotation");
  }
  return pose;
}

nlohmann::json scene_object_to_json(const SceneObject& object) {
  nlohmann::json j;
  j["id"] = object.id;
  switch (object.shape.kind) {
    case ShapeKind::Box:
      j["shape"] = "box";
      j["dims_m"] = {object.shape.extents.x(), object.shape.extents.y(), object.shape.extents.z()};
      break;
    case ShapeKind::Cylinder:
      j["shape"] = "cylinder";
      j["dims_m"] = {object.shape.radius, object.shape.height};
      break;
    case ShapeKind::Sphere:
      j["shape"] = "sphere";
      j["dims_m"] = {object.shape.radius};
      break;
  }
  j["pose"] = transform_to_json(object.pose);
  j["color"] = {object.base_color.x(), object.base_color.y(), object.base_color.z()};
  j["deformable"] = object.deformable_flag;
  return j;
}

SceneObject scene_object_from_json(const nlohmann::json& j) {
  SceneObject obj;
  obj.id = j.at("id").get<std::string>();
  std::string kind = j.at("shape").get<std::string>();
  const auto& dims = j.at("dims_m");
  if (kind == "box") {
    if (dims.size() != 3) throw std::invalid_argument("box dims_m must have 3 entries");
    obj.shape = Shape::box({dims[0].get<double>(), dims[1].get<double>(), dims[2].get<double>()});
  } else if (kind == "cylinder") {
    if (dims.size() != 2) throw std::invalid_argument("cylinder dims_m must have 2 entries");
    obj.shape = Shape::cylinder(dims[0].get<double>(), dims[1].get<double>());
  } else if (kind == "sphere") {
    if (dims.size() != 1) throw std::invalid_argument("sphere dims_m must have 1 entry");
    obj.shape = Shape::sphere(dims[0].get<double>());
  } else {
    throw std::invalid_argument("unknown shape kind: " + kind);
  }
  obj.pose = transform_from_json(j.at("pose"));
  if (j.contains("color")) {
    const auto& c = j.at("color");
    obj.base_color = {c[0].get<double>(), c[1].get<double>(), c[2].get<double>()};
  }
  obj.deformable_flag = j.value("deformable", false);
  return obj;
}

}  // namespace pickstow
