#include <doctest.h>

#include <cmath>

#include "snerf/train.hpp"

using namespace snerf;

namespace {

FieldConfig tiny_config() {
  FieldConfig c;
  c.encoding.pos_freqs = 2;
  c.encoding.dir_freqs = 1;
  c.trunk_depth = 2;
  c.trunk_width = 8;
  c.head_width = 8;
  c.skip_layer = 1;
  c.num_classes = 3;
  return c;
}

struct Batch {
  std::vector<Ray> rays;
  std::vector<RayTarget> targets;
  std::vector<float> soft{0.2f, 0.5f, 0.3f};
};

Batch make_batch(Rng& rng) {
  Batch b;
  for (int i = 0; i < 4; ++i) {
    Ray r;
    r.origin = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.5);
    r.direction = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), -1.0).normalized();
    r.t_near = 0.5;
    r.t_far = 2.5;
    b.rays.push_back(r);
    RayTarget t;
    t.rgb = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    t.label = std::uint8_t(i % 3);
    b.targets.push_back(t);
  }
  b.targets[2].label = kVoidLabel;
  b.targets[3].soft = b.soft;
  return b;
}

/// Signs of every ReLU unit over all planned samples of both networks. Central
/// differences are only meaningful when this pattern is constant on [p-h, p+h].
std::vector<bool> relu_pattern(const Field<double>& field, const Batch& b, const SamplePlan& plan) {
  std::vector<bool> pattern;
  for (int net = 0; net < 2; ++net) {
    const auto& sets = net == 0 ? plan.coarse : plan.fine;
    std::size_t n = 0;
    for (const auto& s : sets) n += s.size();
    Matrix<double> pos(3, Eigen::Index(n)), dir(3, Eigen::Index(n));
    Eigen::Index col = 0;
    for (std::size_t r = 0; r < sets.size(); ++r) {
      for (double t : sets[r].t) {
        pos.col(col) = b.rays[r].at(t);
        dir.col(col) = b.rays[r].direction;
        ++col;
      }
    }
    FieldBatch<double> out;
    NetworkTape<double> tape;
    field.forward(net == 0 ? NetworkId::Coarse : NetworkId::Fine, pos, dir, out, tape);
    auto append = [&](const Matrix<double>& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) pattern.push_back(m.data()[i] > 0.0);
    };
    for (const auto& layer : tape.trunk) append(layer);
    append(tape.sem_hidden);
    append(tape.rgb_hidden);
  }
  return pattern;
}

}  // namespace

TEST_CASE("analytic gradients match central differences on a tiny field") {
  RenderConfig rc;
  rc.num_coarse = 8;
  rc.num_fine = 8;
  const double lambda = 0.5;
  const double h = 1e-4;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Field<double> field(tiny_config());
    field.initialize(seed);
    // Lift the density bias so both passes see non-trivial weights.
    for (NetworkId id : {NetworkId::Coarse, NetworkId::Fine}) {
      field.params()[field.layer(id, "sigma").bias_offset] = 0.8;
    }
    Rng rng(seed * 77);
    const Batch batch = make_batch(rng);
    SamplePlan plan;
    std::vector<double> grad(field.num_params(), 0.0);
    const LossTerms analytic_terms =
        loss_gradients<double>(field, batch.rays, batch.targets, lambda, rc, plan, &rng, grad);
    const LossTerms reference = evaluate_loss<double>(field, batch.rays, batch.targets, lambda, plan);
    CHECK(analytic_terms.total == doctest::Approx(reference.total).epsilon(1e-12));
    CHECK(reference.semantic > 0.0);

    double worst = 0.0;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < field.num_params(); ++i) {
      const double saved = field.params()[i];
      field.params()[i] = saved + h;
      const double up = evaluate_loss<double>(field, batch.rays, batch.targets, lambda, plan).total;
      const auto pattern_up = relu_pattern(field, batch, plan);
      field.params()[i] = saved - h;
      const double down = evaluate_loss<double>(field, batch.rays, batch.targets, lambda, plan).total;
      const auto pattern_down = relu_pattern(field, batch, plan);
      field.params()[i] = saved;
      if (pattern_up != pattern_down) {
        ++skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * h);
      const double rel = std::abs(numeric - grad[i]) / std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
      worst = std::max(worst, rel);
    }
    INFO("seed " << seed << ", parameters straddling a ReLU kink: " << skipped);
    CHECK(worst < 1e-4);
    CHECK(skipped * 50 < field.num_params());
  }
}

TEST_CASE("Adam takes a step of size lr against the gradient sign on the first update") {
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -4.0, 0.0};
  AdamState state(3);
  adam_step<double>(p, g, state, 0.1);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(p[2] == 0.5);
  CHECK(state.step == 1);
}

TEST_CASE("semantic loss ignores void rays and the photometric term sums both passes") {
  RenderOutput out;
  out.rgb_coarse = Vec3(0.5, 0.5, 0.5);
  out.rgb_fine = Vec3(0.5, 0.5, 0.5);
  out.logits_coarse = Eigen::VectorXd::Zero(2);
  out.logits_fine = Eigen::VectorXd::Zero(2);
  RayTarget t;
  t.rgb = Vec3(0.5, 0.5, 0.6);
  const std::vector<RenderOutput> outs{out};
  std::vector<RayTarget> targets{t};
  CHECK(photometric_loss(outs, targets) == doctest::Approx(0.02));
  CHECK(semantic_loss(outs, targets) == 0.0);
  targets[0].label = 1;
  CHECK(semantic_loss(outs, targets) == doctest::Approx(2.0 * std::log(2.0)));
  const LossTerms all = total_loss(outs, targets, 0.04);
  CHECK(all.total == doctest::Approx(0.02 + 0.04 * 2.0 * std::log(2.0)));
}
