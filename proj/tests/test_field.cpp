#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "snerf/errors.hpp"
#include "snerf/field.hpp"
#include "snerf/rng.hpp"
#include "snerf/train.hpp"

using namespace snerf;

TEST_CASE("positional encoding layout") {
  const std::vector<double> zero{0.0, 0.0, 0.0};
  const auto e = positional_encode<double>(zero, 10, true);
  CHECK(e.size() == 63);
  for (int k = 0; k < 10; ++k) {
    for (int i = 0; i < 3; ++i) {
      CHECK(e[3 + 6 * k + i] == 0.0);
      CHECK(e[3 + 6 * k + 3 + i] == 1.0);
    }
  }
  const std::vector<double> v{0.3, -0.2, 0.7};
  CHECK(positional_encode<double>(v, 0, true) == v);
  const auto f = positional_encode<double>(v, 2, false);
  CHECK(f.size() == 12);
  CHECK(f[6 + 1] == doctest::Approx(std::sin(2.0 * std::numbers::pi * -0.2)));
  CHECK(f[6 + 3 + 2] == doctest::Approx(std::cos(2.0 * std::numbers::pi * 0.7)));
}

TEST_CASE("density and semantics do not depend on the viewing direction") {
  Field<float> field(FieldConfig::desk_scale(6));
  field.initialize(3);
  Rng rng(4);
  bool rgb_differs = false;
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 x(rng.uniform(-2, 2), rng.uniform(0, 2.6), rng.uniform(-2, 2));
    const Vec3 d1 = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Vec3 d2 = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    for (NetworkId id : {NetworkId::Coarse, NetworkId::Fine}) {
      const auto a = field.query(id, x, d1), b = field.query(id, x, d2);
      CHECK(a.sigma == b.sigma);
      CHECK(a.logits == b.logits);
      CHECK(std::isfinite(a.sigma));
      CHECK(a.sigma >= 0.0f);
      CHECK(a.rgb.minCoeff() >= 0.0f);
      CHECK(a.rgb.maxCoeff() <= 1.0f);
      rgb_differs = rgb_differs || a.rgb != b.rgb;
    }
  }
  CHECK(rgb_differs);
  CHECK_THROWS_AS(field.query(NetworkId::Fine, Vec3(NAN, 0, 0), Vec3(0, 0, 1)), DomainError);
}

TEST_CASE("position scale rescales coordinates before encoding") {
  FieldConfig c = FieldConfig::desk_scale(4);
  Field<double> unit(c);
  unit.initialize(5);
  c.encoding.position_scale = 0.25;
  Field<double> scaled(c);
  scaled.params() = unit.params();
  const Vec3 x(1.2, 0.4, -2.0), d = Vec3(0.3, -0.2, 1.0).normalized();
  const auto a = scaled.query(NetworkId::Fine, x, d);
  const auto b = unit.query(NetworkId::Fine, 0.25 * x, d);
  CHECK(a.sigma == doctest::Approx(b.sigma).epsilon(1e-12));
  CHECK((a.logits - b.logits).norm() < 1e-12);
  CHECK((a.rgb - b.rgb).norm() < 1e-12);
  c.encoding.position_scale = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("layer table and parameter vector agree") {
  const FieldConfig c = FieldConfig::desk_scale(7);
  Field<float> field(c);
  std::size_t total = 0;
  for (const auto& l : field.layers()) total += std::size_t(l.in + 1) * l.out;
  CHECK(total == field.num_params());
  CHECK(field.layer(NetworkId::Coarse, "trunk0").in == 63);
  CHECK(field.layer(NetworkId::Fine, "trunk2").in == 64 + 63);
  const auto [b, e] = field.network_range(NetworkId::Fine);
  CHECK(e == field.num_params());
  CHECK(b == field.num_params() / 2);
  FieldConfig bad = c;
  bad.skip_layer = 9;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("checkpoints round-trip exactly and reject corruption") {
  const auto dir = std::filesystem::temp_directory_path() / "snerf_ckpt_test";
  std::filesystem::create_directories(dir);
  Field<float> field(FieldConfig::desk_scale(5));
  field.initialize(9);
  save_checkpoint(dir / "a.ckpt", field, 1234);
  const auto ck = load_checkpoint(dir / "a.ckpt");
  CHECK(ck.step == 1234);
  CHECK(ck.field.params() == field.params());
  CHECK(ck.field.config() == field.config());
  {
    std::ofstream out(dir / "bad.ckpt", std::ios::binary);
    out << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), MissingFileError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("gradient properties") {
  FieldConfig c;
  c.encoding.pos_freqs = 2;
  c.encoding.dir_freqs = 1;
  c.trunk_depth = 2;
  c.trunk_width = 8;
  c.head_width = 8;
  c.skip_layer = 1;
  c.num_classes = 3;
  Field<double> field(c);
  field.initialize(2);
  RenderConfig rc;
  rc.num_coarse = 8;
  rc.num_fine = 8;
  Ray ray;
  ray.origin = Vec3(0, 0, 1.5);
  ray.direction = Vec3(0.1, 0, -1).normalized();
  ray.t_near = 0.5;
  ray.t_far = 2.5;
  RayTarget t;
  t.rgb = Vec3(0.2, 0.6, 0.4);
  t.label = 1;

  // Duplicating a ray doubles its gradient.
  std::vector<double> g1(field.num_params(), 0.0), g2(field.num_params(), 0.0);
  SamplePlan p1, p2;
  const std::vector<Ray> one{ray}, two{ray, ray};
  const std::vector<RayTarget> t1{t}, t2{t, t};
  loss_gradients<double>(field, one, t1, 0.04, rc, p1, nullptr, g1);
  loss_gradients<double>(field, two, t2, 0.04, rc, p2, nullptr, g2);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));

  // lambda = 0: the semantic head gets exactly zero gradient.
  std::vector<double> g0(field.num_params(), 0.0);
  SamplePlan p0;
  loss_gradients<double>(field, one, t1, 0.0, rc, p0, nullptr, g0);
  for (NetworkId id : {NetworkId::Coarse, NetworkId::Fine}) {
    for (const char* name : {"semantic_hidden", "semantic_out"}) {
      const auto& l = field.layer(id, name);
      for (std::size_t i = l.weight_offset; i < l.bias_offset + l.out; ++i) CHECK(g0[i] == 0.0);
    }
  }

  // Perfect colour and lambda = 0: zero gradient everywhere. With no fine
  // samples and identical networks both passes render the same colour.
  auto& params = field.params();
  const auto [cb, ce] = field.network_range(NetworkId::Coarse);
  std::copy(params.begin() + cb, params.begin() + ce, params.begin() + ce);
  rc.num_fine = 0;
  const auto out = render_ray<double>(field, ray, rc);
  CHECK((out.rgb_coarse - out.rgb_fine).norm() < 1e-15);
  RayTarget exact;
  exact.rgb = out.rgb_fine;
  SamplePlan pz;
  std::vector<double> gz(field.num_params(), 0.0);
  const auto terms = loss_gradients<double>(field, one, std::vector<RayTarget>{exact}, 0.0, rc, pz, nullptr, gz);
  CHECK(terms.photometric < 1e-28);
  for (double g : gz) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("density noise shifts the raw density before the activation") {
  FieldConfig c = FieldConfig::desk_scale(3);
  Field<double> field(c);
  field.initialize(8);
  Field<double> shifted = field;
  const double shift = 0.7;
  shifted.params()[shifted.layer(NetworkId::Coarse, "sigma").bias_offset] += shift;
  Matrix<double> pos(3, 5), dir(3, 5);
  for (int i = 0; i < 5; ++i) {
    pos.col(i) << 0.3 * i, 1.0, -0.2 * i;
    dir.col(i) = Eigen::Vector3d(0.1 * i, -1.0, 0.5).normalized();
  }
  const Eigen::Matrix<double, 1, Eigen::Dynamic> noise = Eigen::Matrix<double, 1, Eigen::Dynamic>::Constant(5, shift);
  FieldBatch<double> a, b;
  NetworkTape<double> ta, tb;
  field.forward(NetworkId::Coarse, pos, dir, a, ta, &noise);
  shifted.forward(NetworkId::Coarse, pos, dir, b, tb);
  CHECK((a.sigma - b.sigma).norm() < 1e-12);
  CHECK((a.rgb - b.rgb).norm() < 1e-12);
  const Eigen::Matrix<double, 1, Eigen::Dynamic> wrong = Eigen::Matrix<double, 1, Eigen::Dynamic>::Zero(4);
  CHECK_THROWS_AS(field.forward(NetworkId::Coarse, pos, dir, a, ta, &wrong), DomainError);
}
