#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "snerf/dataset.hpp"
#include "snerf/geometry.hpp"

namespace snerf {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

struct Box {
  Vec3 min = Vec3::Constant(-0.5);
  Vec3 max = Vec3::Constant(0.5);
};

/// Points x with normal . x = offset. The normal faces the room interior.
struct Plane {
  Vec3 normal = Vec3::UnitY();
  double offset = 0.0;
};

using Shape = std::variant<Sphere, Box, Plane>;

struct Primitive {
  Shape shape;
  int class_id = 0;
  int instance_id = 0;
  Vec3 albedo = Vec3::Constant(0.5);
};

struct Light {
  Vec3 direction = Vec3(0.3, 1.0, 0.2).normalized();  ///< unit vector toward the light
  double ambient = 0.35;
};

struct SceneModel {
  std::vector<Primitive> primitives;
  int num_classes = 0;
  std::vector<std::string> class_names;
  int background_class = 0;
  Vec3 background_albedo = Vec3::Constant(0.5);
  Light light;
  Vec3 world_min = Vec3::Zero();
  Vec3 world_max = Vec3::Zero();
  double specular = 0.0;  ///< strength of an optional view-dependent highlight; 0 = pure Lambertian
  Vec3 focus = Vec3::Zero();  ///< point the cameras orbit around

  void validate() const;
  bool operator==(const SceneModel&) const;
};

struct SceneSpec {
  int num_primitives = 8;  ///< foreground objects; the room shell is added on top
  int num_classes = 7;     ///< including the background class
  Vec3 world_min{-2.5, 0.0, -2.5};
  Vec3 world_max{2.5, 2.6, 2.5};
  double placement_radius = 1.1;  ///< objects are placed within this distance of the room centre axis
  bool enclosed_room = true;      ///< floor, walls and ceiling as planes
  std::optional<int> single_class;  ///< force every object into one class
  bool specular = false;

  void validate() const;
  bool operator==(const SceneSpec&) const = default;
};

/// Class 0 is the background (walls, ceiling, misses); class 1 the floor when
/// num_classes >= 3; objects take the remaining ids. With at least 4 objects,
/// the first object class receives at least two instances.
SceneModel generate_scene(const SceneSpec& spec, std::uint64_t seed);

struct Hit {
  Vec3 rgb = Vec3::Zero();
  double depth = 0.0;  ///< ray distance; t_far on a miss
  int class_id = 0;
  int instance_id = 0;  ///< 0 on a miss
  int primitive = -1;   ///< index into SceneModel::primitives, -1 on a miss
  Vec3 normal = Vec3::Zero();
};

/// Nearest hit in [t_near, t_far] with Lambertian + ambient shading.
Hit raycast_gt(const SceneModel& scene, const Ray& ray);

/// Smallest t in [t_near, t_far] where the ray meets the shape, if any.
std::optional<double> intersect(const Shape& shape, const Ray& ray, Vec3* normal = nullptr);

/// Unsigned distance from `p` to the surface of `shape`.
double surface_distance(const Shape& shape, const Vec3& p);

struct TrajectorySpec {
  int num_poses = 200;
  double radius_min = 1.9;
  double radius_max = 2.3;
  double elevation_min_deg = 10.0;
  double elevation_max_deg = 35.0;
  double sweep_deg = 360.0;    ///< total azimuth travelled over the sequence
  double target_jitter = 0.15;  ///< metres of smooth look-at wander around the focus
  Vec3 centre = Vec3(0.0, 0.4, 0.0);
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrajectorySpec&) const = default;
};

/// Smooth roll-free orbit resembling a hand-held sweep around `centre`.
std::vector<Pose> make_trajectory(const TrajectorySpec& spec);

/// Ray-casts every pixel of every pose. Labels are complete (no void);
/// instance and depth maps are stored alongside.
Dataset render_sequence(const SceneModel& scene, const Camera& camera, const std::vector<Pose>& trajectory,
                        Bounds bounds, int threads = 1);

}  // namespace snerf
