#include "snerf/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "snerf/errors.hpp"

namespace snerf {

Camera Camera::from_hfov(int width, int height, double hfov_degrees) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  const double half = 0.5 * hfov_degrees * std::numbers::pi / 180.0;
  cam.fx = 0.5 * width / std::tan(half);
  cam.fy = cam.fx;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

void Camera::validate() const {
  if (width < 1 || height < 1) throw DomainError("camera: image dimensions must be >= 1");
  if (!(fx > 0.0) || !(fy > 0.0)) throw DomainError("camera: focal lengths must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw DomainError("camera: principal point outside the image");
  }
}

Pose Pose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) throw DomainError("look_at: forward direction parallel to up hint");
  right.normalize();
  const Vec3 cam_up = right.cross(forward);
  Pose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = cam_up;
  pose.rotation.col(2) = -forward;
  pose.translation = eye;
  return pose;
}

void Pose::validate() const {
  if (!rotation.allFinite() || !translation.allFinite()) throw DomainError("pose: non-finite entries");
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-6) throw DomainError("pose: rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-6) throw DomainError("pose: rotation has det != +1");
}

void Bounds::validate() const {
  if (!(t_near > 0.0) || !(t_far > t_near)) throw DomainError("ray bounds must satisfy 0 < t_near < t_far");
}

Vec3 camera_direction(const Camera& camera, double col, double row) {
  return {(col + 0.5 - camera.cx) / camera.fx, -(row + 0.5 - camera.cy) / camera.fy, -1.0};
}

Ray ray_for_pixel(const Camera& camera, const Pose& pose, Pixel px, Bounds bounds) {
  if (px.col < 0 || px.col >= camera.width || px.row < 0 || px.row >= camera.height) {
    throw DomainError("ray_for_pixel: pixel (" + std::to_string(px.col) + ", " + std::to_string(px.row) +
                      ") outside the image");
  }
  bounds.validate();
  Ray ray;
  ray.origin = pose.translation;
  ray.direction = (pose.rotation * camera_direction(camera, px.col, px.row)).normalized();
  ray.t_near = bounds.t_near;
  ray.t_far = bounds.t_far;
  return ray;
}

std::optional<Reprojection> project(const Vec3& world, const Pose& pose, const Camera& camera) {
  const Vec3 p = pose.to_camera(world);
  if (!(p.z() < 0.0)) return std::nullopt;
  const double u = camera.cx + camera.fx * p.x() / -p.z();
  const double v = camera.cy - camera.fy * p.y() / -p.z();
  if (!(u >= 0.0 && u < camera.width && v >= 0.0 && v < camera.height)) return std::nullopt;
  return Reprojection{Vec2(u - 0.5, v - 0.5), p.norm()};
}

std::optional<Reprojection> reproject(Pixel px, double depth, const Pose& src, const Pose& tgt,
                                      const Camera& camera) {
  if (!(depth > 0.0)) throw DomainError("reproject: depth must be positive");
  const Vec3 dir = (src.rotation * camera_direction(camera, px.col, px.row)).normalized();
  return project(src.translation + depth * dir, tgt, camera);
}

}  // namespace snerf
