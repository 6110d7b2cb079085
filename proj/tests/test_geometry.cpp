#include <doctest.h>

#include <cmath>

#include "snerf/errors.hpp"
#include "snerf/geometry.hpp"
#include "snerf/rng.hpp"

using namespace snerf;

namespace {

Pose random_pose(Rng& rng) {
  const Vec3 eye(rng.uniform(-2, 2), rng.uniform(0.2, 2), rng.uniform(-2, 2));
  const Vec3 target(rng.uniform(-0.5, 0.5), rng.uniform(0, 1), rng.uniform(-0.5, 0.5));
  return Pose::look_at(eye, target);
}

}  // namespace

TEST_CASE("rays through the principal point follow the optical axis") {
  Camera cam{64, 48, 40.0, 40.0, 32.0, 24.0};
  Rng rng(1);
  const Pose pose = random_pose(rng);
  // The centre of pixel (31, 23) is exactly the principal point... of a shifted camera.
  cam.cx = 31.5;
  cam.cy = 23.5;
  const Ray r = ray_for_pixel(cam, pose, {31, 23}, {0.1, 10.0});
  CHECK((r.direction - pose.rotation * Vec3(0, 0, -1)).norm() < 1e-12);
  CHECK((r.origin - pose.translation).norm() == 0.0);
}

TEST_CASE("a 90 degree camera puts its edge pixels 45 degrees off axis") {
  const Camera cam = Camera::from_hfov(64, 48, 90.0);
  CHECK(cam.fx == doctest::Approx(32.0));
  const Vec3 d = camera_direction(cam, 0.0, 23.5 - 0.5 + 0.5);
  CHECK(d.x() == doctest::Approx(-(cam.cx - 0.5) / cam.fx));
  CHECK(d.x() == doctest::Approx(-1.0).epsilon(0.02));
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const Pose p = random_pose(rng);
    const Ray r = ray_for_pixel(cam, p, {int(rng.below(64)), int(rng.below(48))}, {0.1, 10.0});
    CHECK(r.direction.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ray_for_pixel(cam, Pose{}, {64, 0}, {0.1, 10.0}), DomainError);
  CHECK_THROWS_AS(ray_for_pixel(cam, Pose{}, {0, -1}, {0.1, 10.0}), DomainError);
  CHECK_THROWS_AS(ray_for_pixel(cam, Pose{}, {0, 0}, {1.0, 0.5}), DomainError);
}

TEST_CASE("ray direction ignores translation") {
  const Camera cam = Camera::from_hfov(32, 24, 70.0);
  Rng rng(3);
  Pose a = random_pose(rng), b = a;
  b.translation += Vec3(1, 2, 3);
  const Ray ra = ray_for_pixel(cam, a, {5, 7}, {0.1, 10.0});
  const Ray rb = ray_for_pixel(cam, b, {5, 7}, {0.1, 10.0});
  CHECK(ra.direction == rb.direction);
}

TEST_CASE("reprojection oracles") {
  const Camera cam = Camera::from_hfov(64, 48, 90.0);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Pose p = random_pose(rng);
    const Pixel px{int(rng.below(64)), int(rng.below(48))};
    const auto r = reproject(px, rng.uniform(0.2, 5.0), p, p, cam);
    REQUIRE(r);
    CHECK(std::abs(r->pixel.x() - px.col) <= 0.5);
    CHECK(std::abs(r->pixel.y() - px.row) <= 0.5);
  }
  // Optical-axis point at 2 m; target moved +0.1 m along its own x axis.
  Camera centred = cam;
  centred.cx = 32.5;
  centred.cy = 24.5;
  const Pose src;
  Pose tgt;
  tgt.translation = Vec3(0.1, 0, 0);
  const auto moved = reproject({32, 24}, 2.0, src, tgt, centred);
  REQUIRE(moved);
  CHECK(moved->pixel.x() - 32.0 == doctest::Approx(-0.1 * centred.fx / 2.0));
  // Behind the target.
  Pose behind;
  behind.translation = Vec3(0, 0, -3);
  CHECK_FALSE(reproject({32, 24}, 2.0, src, behind, centred));
  CHECK_THROWS_AS(reproject({32, 24}, 0.0, src, tgt, centred), DomainError);
}

TEST_CASE("round trip between views returns the start pixel") {
  const Camera cam = Camera::from_hfov(64, 48, 80.0);
  const Pose a = Pose::look_at({1.5, 1.0, 1.0}, {0, 0.4, 0});
  const Pose b = Pose::look_at({1.2, 1.1, 1.5}, {0, 0.4, 0});
  Rng rng(5);
  int tested = 0;
  for (int i = 0; i < 300; ++i) {
    const Pixel px{int(rng.below(64)), int(rng.below(48))};
    const double d = rng.uniform(1.0, 3.0);
    const auto ab = reproject(px, d, a, b, cam);
    if (!ab) continue;
    const Pixel q{int(std::lround(ab->pixel.x())), int(std::lround(ab->pixel.y()))};
    if (q.col < 0 || q.row < 0 || q.col >= 64 || q.row >= 48) continue;
    const auto ba = reproject(q, ab->depth, b, a, cam);
    if (!ba) continue;
    CHECK((ba->pixel - Vec2(px.col, px.row)).norm() < 1.5);
    ++tested;
  }
  CHECK(tested > 50);
}

TEST_CASE("look_at poses are rigid and roll-free") {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const Pose p = random_pose(rng);
    CHECK((p.rotation.transpose() * p.rotation - Mat3::Identity()).norm() < 1e-9);
    CHECK(p.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.rotation.col(1).y() >= 0.0);
    CHECK(std::abs(p.rotation.col(0).y()) < 1e-12);
  }
}
