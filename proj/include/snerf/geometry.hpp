#pragma once

#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace snerf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics in pixels.
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  /// Camera with the principal point at the image centre and the given
  /// horizontal field of view (square pixels).
  static Camera from_hfov(int width, int height, double hfov_degrees);

  void validate() const;
  int num_pixels() const { return width * height; }
  bool operator==(const Camera&) const = default;
};

/// Rigid camera-to-world transform. The camera looks along -z with +y up.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  /// Roll-free pose at `eye` looking at `target` with world +y as the up hint.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitY());

  Vec3 to_world(const Vec3& p_cam) const { return rotation * p_cam + translation; }
  Vec3 to_camera(const Vec3& p_world) const { return rotation.transpose() * (p_world - translation); }
  Vec3 forward() const { return -rotation.col(2); }

  void validate() const;
  bool operator==(const Pose&) const = default;
};

struct Bounds {
  double t_near = 0.1;
  double t_far = 10.0;

  void validate() const;
  bool operator==(const Bounds&) const = default;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = -Vec3::UnitZ();
  double t_near = 0.1;
  double t_far = 10.0;

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Integer pixel index; its centre sits at (col + 0.5, row + 0.5).
struct Pixel {
  int col = 0;
  int row = 0;
};

/// Unit ray through the centre of `px`. Throws DomainError for pixels
/// outside the image or invalid bounds.
Ray ray_for_pixel(const Camera& camera, const Pose& pose, Pixel px, Bounds bounds);

/// Camera-space (unnormalized, z = -1) direction through a continuous image
/// coordinate (pixel-index units, centre of pixel i at i).
Vec3 camera_direction(const Camera& camera, double col, double row);

struct Reprojection {
  Vec2 pixel;    ///< continuous (col, row) in pixel-index units
  double depth;  ///< distance from the target camera centre, metres
};

/// Lifts `px` at ray distance `depth` through `src` and projects it into
/// `tgt`. Returns nullopt when the point is behind the target camera or
/// falls outside the image. No occlusion test is done here.
std::optional<Reprojection> reproject(Pixel px, double depth, const Pose& src, const Pose& tgt,
                                      const Camera& camera);

/// Projects a world point; nullopt when behind the camera or outside the image.
std::optional<Reprojection> project(const Vec3& world, const Pose& pose, const Camera& camera);

}  // namespace snerf
