#include <doctest.h>

#include <cmath>
#include <numbers>

#include "snerf/errors.hpp"
#include "snerf/render.hpp"

using namespace snerf;

namespace {

/// Density spike (an opaque slab) at a fixed distance along -z from the origin.
class WallField final : public FieldEvaluator<double> {
 public:
  explicit WallField(double depth, double density = 1e4) : depth_(depth), density_(density) {}
  int num_classes() const override { return 4; }
  void evaluate(NetworkId, const Matrix<double>& pos, const Matrix<double>&, FieldBatch<double>& out) const override {
    const auto n = pos.cols();
    out.sigma.resize(n);
    out.rgb = Matrix<double>::Constant(3, n, 0.25);
    out.logits = Matrix<double>::Zero(4, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.sigma(i) = -pos(2, i) >= depth_ ? density_ : 0.0;
      out.logits(1, i) = 20.0;
    }
  }

 private:
  double depth_, density_;
};

class EmptyField final : public FieldEvaluator<double> {
 public:
  int num_classes() const override { return 5; }
  void evaluate(NetworkId, const Matrix<double>& pos, const Matrix<double>&, FieldBatch<double>& out) const override {
    out.sigma = Eigen::RowVectorXd::Zero(pos.cols());
    out.rgb = Matrix<double>::Constant(3, pos.cols(), 0.7);
    out.logits = Matrix<double>::Zero(5, pos.cols());
  }
};

}  // namespace

TEST_CASE("stratified samples") {
  const auto s = stratified_samples({1e-9, 1.0}, 4, nullptr, false);
  CHECK(s.t[0] == doctest::Approx(0.125));
  CHECK(s.t[3] == doctest::Approx(0.875));
  CHECK(s.delta[3] == doctest::Approx(0.125));
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto j = stratified_samples({0.5, 2.5}, 8, &rng, true);
    for (int k = 0; k < 8; ++k) {
      CHECK(j.t[k] >= 0.5 + 0.25 * k);
      CHECK(j.t[k] < 0.5 + 0.25 * (k + 1));
    }
  }
  const auto one = stratified_samples({0.1, 10.0}, 1, &rng, true);
  CHECK(one.t[0] >= 0.1);
  CHECK(one.t[0] <= 10.0);
}

TEST_CASE("compositing identities") {
  const std::vector<double> sig{std::log(2.0), std::log(2.0)}, del{1.0, 1.0};
  Eigen::MatrixXd v(2, 2);
  v << 1, 3, 2, 4;
  const auto r = composite(sig, del, v);
  CHECK(std::abs(r.weights(0) - 0.5) < 1e-12);
  CHECK(std::abs(r.weights(1) - 0.25) < 1e-12);
  CHECK(r.value.isApprox(0.5 * v.col(0) + 0.25 * v.col(1)));

  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(16), d(16);
    for (int k = 0; k < 16; ++k) {
      s[k] = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 20.0);
      d[k] = rng.uniform(0.01, 0.3);
    }
    const Eigen::MatrixXd a = Eigen::MatrixXd::Random(3, 16), b = Eigen::MatrixXd::Random(3, 16);
    const auto ra = composite(s, d, a), rb = composite(s, d, b), rab = composite(s, d, 2.0 * a - 3.0 * b);
    CHECK(std::abs(ra.weights.sum() - (1.0 - ra.transmittance(16))) < 1e-12);
    CHECK((rab.value - (2.0 * ra.value - 3.0 * rb.value)).norm() < 1e-12);
    CHECK(ra.weights.sum() <= 1.0 + 1e-6);
    CHECK(ra.weights.minCoeff() >= 0.0);
    // A zero-density sample absorbs nothing, so the other weights stay put.
    std::vector<double> s2 = s, d2 = d;
    const auto at = std::ptrdiff_t(rng.below(17));
    s2.insert(s2.begin() + at, 0.0);
    d2.insert(d2.begin() + at, rng.uniform(0.01, 0.3));
    const auto w2 = composite(s2, d2, Eigen::MatrixXd::Zero(1, 17)).weights;
    CHECK(w2(at) == 0.0);
    for (Eigen::Index k = 0; k < 16; ++k) CHECK(std::abs(w2(k < at ? k : k + 1) - ra.weights(k)) <= 1e-12);
  }
  const std::vector<double> zeros(4, 0.0), deltas(4, 0.5);
  CHECK(composite(zeros, deltas, Eigen::MatrixXd::Ones(2, 4)).value.isZero());
  const std::vector<double> opaque{1e9, 1.0, 1.0}, d3(3, 1.0);
  CHECK(composite(opaque, d3, Eigen::MatrixXd::Identity(3, 3)).weights(0) == doctest::Approx(1.0));
  const std::vector<double> neg{-1.0};
  CHECK_THROWS_AS(composite(neg, std::vector<double>{1.0}, Eigen::MatrixXd::Zero(1, 1)), DomainError);
  CHECK_THROWS_AS(composite(std::vector<double>{1.0}, std::vector<double>{0.0}, Eigen::MatrixXd::Zero(1, 1)), DomainError);
}

TEST_CASE("importance sampling follows the coarse weights") {
  const auto coarse = stratified_samples({1.0, 5.0}, 8, nullptr, false);
  std::vector<double> w(8, 0.0);
  w[5] = 1.0;
  Rng rng(3);
  const auto fine = importance_samples(coarse, w, 64, &rng, 0.0);
  CHECK(fine.size() == 72);
  int inside = 0;
  for (double t : fine.t) inside += (t >= 3.5 && t <= 4.0);
  CHECK(inside == 64 + 1);
  for (std::size_t i = 1; i < fine.size(); ++i) CHECK(fine.t[i] > fine.t[i - 1]);
  CHECK(fine.t.front() >= 1.0);
  CHECK(fine.t.back() < 5.0);

  // Uniform weights: new samples spread uniformly over the 8 cells.
  const std::vector<double> flat(8, 1.0);
  const int m = 10000;
  const auto many = importance_samples(coarse, flat, m, &rng, 1e-5);
  std::vector<int> hist(8, 0);
  for (double t : many.t) hist[std::min(7, int((t - 1.0) / 0.5))]++;
  const double mean = m / 8.0, sd = std::sqrt(m * (1.0 / 8) * (7.0 / 8));
  for (int h : hist) CHECK(std::abs(h - 1 - mean) < 3 * sd);
}

TEST_CASE("render_ray oracles") {
  RenderConfig cfg;
  cfg.num_coarse = 32;
  cfg.num_fine = 32;
  Ray ray;
  ray.t_near = 0.1;
  ray.t_far = 10.0;
  const auto empty = render_ray<double>(EmptyField{}, ray, cfg);
  CHECK(empty.depth == 0.0);
  CHECK(empty.entropy == doctest::Approx(std::log(5.0)));
  CHECK(empty.label == 0);

  const auto wall = render_ray<double>(WallField(3.0), ray, cfg);
  const double bin = (10.0 - 0.1) / 32;
  CHECK(wall.depth >= 3.0 - bin);
  CHECK(wall.depth <= 3.0 + bin);
  CHECK(wall.entropy < 0.1);
  CHECK(wall.label == 1);
  CHECK(wall.entropy <= std::log(4.0));
  double sum = 0.0;
  for (double w : wall.weights) sum += w;
  CHECK(sum <= 1.0 + 1e-6);
}

TEST_CASE("argmax ties resolve to the lowest class") {
  Eigen::VectorXd v(4);
  v << 0.1, 0.4, 0.4, 0.1;
  CHECK(argmax_label(v) == 1);
  CHECK(entropy(softmax(Eigen::VectorXd::Zero(3))) == doctest::Approx(std::log(3.0)));
}
