#include <doctest.h>

#include "snerf/fusion.hpp"
#include "snerf/errors.hpp"
#include "snerf/labelops.hpp"

#include <cmath>
#include "snerf/synthgen.hpp"

using namespace snerf;

namespace {
Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(v.size());
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}
}  // namespace

TEST_CASE("bayesian and average fusion match hand algebra") {
  const std::vector<Eigen::VectorXd> uniform{vec({0.5, 0.5}), vec({0.5, 0.5})};
  CHECK(bayesian_fuse(uniform).isApprox(vec({0.5, 0.5})));
  const std::vector<Eigen::VectorXd> same{vec({0.6, 0.4}), vec({0.6, 0.4})};
  const auto b = bayesian_fuse(same);
  CHECK(b(0) == doctest::Approx(0.36 / 0.52).epsilon(1e-12));
  CHECK(b(1) == doctest::Approx(0.16 / 0.52).epsilon(1e-12));
  const std::vector<Eigen::VectorXd> onehot{vec({0.2, 0.3, 0.5}), vec({0.0, 1.0, 0.0})};
  CHECK(bayesian_fuse(onehot)(1) == doctest::Approx(1.0).epsilon(1e-10));
  const std::vector<Eigen::VectorXd> opposite{vec({1, 0}), vec({0, 1})};
  CHECK(average_fuse(opposite).isApprox(vec({0.5, 0.5})));
  const std::vector<Eigen::VectorXd> swapped{vec({0.6, 0.4}), vec({0.4, 0.6})};
  CHECK(bayesian_fuse(swapped).isApprox(vec({0.5, 0.5})));
  CHECK(average_fuse(swapped).isApprox(vec({0.5, 0.5})));
  CHECK(argmax_label(bayesian_fuse(swapped)) == 0);
  const std::vector<Eigen::VectorXd> reversed{swapped[1], swapped[0]};
  CHECK(average_fuse(reversed).isApprox(average_fuse(swapped)));

  // Repeated evidence sharpens monotonically and stays normalised.
  std::vector<Eigen::VectorXd> stack;
  double prev = 0.0;
  for (int n = 1; n <= 6; ++n) {
    stack.push_back(vec({0.5, 0.3, 0.2}));
    const auto f = bayesian_fuse(stack);
    CHECK(f.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.maxCoeff() >= prev);
    prev = f.maxCoeff();
  }
}

TEST_CASE("softened labels are normalised and void is uniform") {
  LabelImage l(2, 1);
  l.at(0, 0) = 2;
  l.at(1, 0) = kVoidLabel;
  const auto p = soften_labels(l, 4, 0.1);
  CHECK(p.at(0, 0, 2) == doctest::Approx(0.9));
  CHECK(p.at(0, 0, 0) == doctest::Approx(0.1 / 3));
  CHECK(p.at(1, 0, 3) == doctest::Approx(0.25));
  CHECK(argmax_labels(p).at(0, 0) == 2);
}

TEST_CASE("fusion across views of a rendered scene") {
  SceneSpec spec;
  const auto scene = generate_scene(spec, 11);
  TrajectorySpec ts;
  ts.num_poses = 6;
  ts.sweep_deg = 40.0;
  ts.seed = 2;
  const Camera cam = Camera::from_hfov(32, 24, 70.0);
  const Dataset ds = render_sequence(scene, cam, make_trajectory(ts), {0.1, 10.0});
  std::vector<ProbabilityMap> clean;
  for (const auto& f : ds.frames) clean.push_back(soften_labels(f.labels, ds.num_classes, 0.1));
  const std::vector<int> all{0, 1, 2, 3, 4, 5};
  const std::vector<int> self{2};
  FusionSettings s;
  for (auto method : {FusionMethod::Bayesian, FusionMethod::Average}) {
    s.method = method;
    // Consensus: views that all say class 3 fuse to class 3.
    std::vector<ProbabilityMap> agree;
    for (const auto& f : ds.frames) agree.push_back(soften_labels(LabelImage(cam.width, cam.height, 1, 3), ds.num_classes, 0.0));
    CHECK(fuse_to_frame(ds, agree, 2, all, s).labels == LabelImage(cam.width, cam.height, 1, 3));
    // Clean views agree away from silhouettes, where nearest-pixel lookup may cross an edge.
    const auto fused = fuse_to_frame(ds, clean, 2, all, s).labels;
    std::size_t same = 0;
    for (std::size_t p = 0; p < fused.num_pixels(); ++p) same += fused[p] == ds.frames[2].labels[p];
    CHECK(double(same) / double(fused.num_pixels()) > 0.97);
    // A window of only the target returns its own prediction.
    Rng rng(3);
    std::vector<ProbabilityMap> noisy;
    for (const auto& f : ds.frames) noisy.push_back(soften_labels(corrupt_pixels(f.labels, 0.4, ds.num_classes, rng), ds.num_classes, 0.1));
    const auto mono = fuse_to_frame(ds, noisy, 2, self, s);
    CHECK(mono.labels == argmax_labels(noisy[2]));
  }
  // Learned depth is mandatory when selected.
  s.depth_source = DepthSource::Learned;
  CHECK_THROWS_AS(fuse_to_frame(ds, clean, 2, all, s), ConfigError);
  std::vector<DepthImage> depths;
  for (const auto& f : ds.frames) depths.push_back(*f.depth);
  s.method = FusionMethod::Bayesian;
  const auto learned = fuse_to_frame(ds, clean, 2, all, s, depths).labels;
  s.depth_source = DepthSource::GroundTruth;
  CHECK(learned == fuse_to_frame(ds, clean, 2, all, s).labels);
}

TEST_CASE("noise-free GT-depth association only links the same surface point") {
  SceneSpec spec;
  const auto scene = generate_scene(spec, 4);
  TrajectorySpec ts;
  ts.num_poses = 4;
  ts.sweep_deg = 30.0;
  const Camera cam = Camera::from_hfov(24, 18, 70.0);
  const Dataset ds = render_sequence(scene, cam, make_trajectory(ts), {0.1, 10.0});
  const double tau = 0.05;
  int checked = 0;
  for (int row = 0; row < cam.height; ++row) {
    for (int col = 0; col < cam.width; ++col) {
      const double d = ds.frames[0].depth->at(col, row);
      const auto hit = reproject({col, row}, d, ds.frames[0].pose, ds.frames[1].pose, cam);
      if (!hit) continue;
      const int u = int(std::lround(hit->pixel.x())), v = int(std::lround(hit->pixel.y()));
      if (u < 0 || v < 0 || u >= cam.width || v >= cam.height) continue;
      const double dj = ds.frames[1].depth->at(u, v);
      if (std::abs(hit->depth - dj) >= tau) continue;
      const Vec3 a = ray_for_pixel(cam, ds.frames[0].pose, {col, row}, {0.1, 10.0}).at(d);
      const Vec3 b = ray_for_pixel(cam, ds.frames[1].pose, {u, v}, {0.1, 10.0}).at(dj);
      // Nearest-pixel rounding moves the target point by at most half a pixel footprint.
      const double footprint = dj / cam.fx;
      CHECK((a - b).norm() <= tau + footprint * 1.5);
      ++checked;
    }
  }
  CHECK(checked > 100);
}
