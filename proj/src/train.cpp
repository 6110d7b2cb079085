#include "snerf/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "snerf/errors.hpp"
#include "snerf/parallel.hpp"

namespace snerf {
namespace {

template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Cross-entropy of softmax(logits) against the target; writes dCE/dlogits when asked.
template <typename S>
double cross_entropy(const Vector<S>& logits, const RayTarget& target, Vector<S>* d_logits) {
  const S top = logits.maxCoeff();
  const Vector<S> e = (logits.array() - top).exp().matrix();
  const S sum = e.sum();
  const double lse = double(top) + std::log(double(sum));
  double ce = 0.0;
  if (d_logits) *d_logits = e / sum;
  if (!target.soft.empty()) {
    double mass = 0.0;
    for (Eigen::Index l = 0; l < logits.size(); ++l) {
      ce += target.soft[l] * (lse - double(logits(l)));
      mass += target.soft[l];
    }
    if (d_logits) {
      *d_logits *= S(mass);
      for (Eigen::Index l = 0; l < logits.size(); ++l) (*d_logits)(l) -= S(target.soft[l]);
    }
  } else {
    ce = lse - double(logits(target.label));
    if (d_logits) (*d_logits)(target.label) -= S(1);
  }
  return ce;
}

template <typename S>
void fill_samples(std::span<const Ray> rays, const std::vector<SampleSet>& sets, Matrix<S>& positions,
                  Matrix<S>& directions, std::vector<Eigen::Index>& offsets) {
  offsets.assign(rays.size() + 1, 0);
  for (std::size_t r = 0; r < rays.size(); ++r) offsets[r + 1] = offsets[r] + Eigen::Index(sets[r].size());
  positions.resize(3, offsets.back());
  directions.resize(3, offsets.back());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    Eigen::Index col = offsets[r];
    for (double t : sets[r].t) {
      positions.col(col) = rays[r].at(t).template cast<S>();
      directions.col(col) = rays[r].direction.template cast<S>();
      ++col;
    }
  }
}

void check_batch(std::span<const Ray> rays, std::span<const RayTarget> targets, int num_classes) {
  if (rays.size() != targets.size()) throw DomainError("loss: rays and targets differ in length");
  for (const auto& t : targets) {
    if (t.soft.empty() && t.label != kVoidLabel && t.label >= num_classes) {
      throw DomainError("loss: target label out of range");
    }
    if (!t.soft.empty() && int(t.soft.size()) != num_classes) throw DomainError("loss: soft target has wrong size");
  }
}

}  // namespace

double photometric_loss(std::span<const RenderOutput> outputs, std::span<const RayTarget> targets) {
  if (outputs.size() != targets.size()) throw DomainError("photometric_loss: size mismatch");
  double loss = 0.0;
  for (std::size_t r = 0; r < outputs.size(); ++r) {
    loss += (outputs[r].rgb_coarse - targets[r].rgb).squaredNorm() + (outputs[r].rgb_fine - targets[r].rgb).squaredNorm();
  }
  return loss;
}

double semantic_loss(std::span<const RenderOutput> outputs, std::span<const RayTarget> targets) {
  if (outputs.size() != targets.size()) throw DomainError("semantic_loss: size mismatch");
  double loss = 0.0;
  for (std::size_t r = 0; r < outputs.size(); ++r) {
    if (!targets[r].labelled()) continue;
    loss += cross_entropy<double>(outputs[r].logits_coarse, targets[r], nullptr) +
            cross_entropy<double>(outputs[r].logits_fine, targets[r], nullptr);
  }
  return loss;
}

LossTerms total_loss(std::span<const RenderOutput> outputs, std::span<const RayTarget> targets, double lambda) {
  LossTerms t;
  t.photometric = photometric_loss(outputs, targets);
  t.semantic = semantic_loss(outputs, targets);
  t.total = t.photometric + lambda * t.semantic;
  return t;
}

template <typename S>
LossTerms loss_gradients(const Field<S>& field, std::span<const Ray> rays, std::span<const RayTarget> targets,
                         double lambda, const RenderConfig& config, SamplePlan& plan, Rng* rng, std::span<S> grad,
                         double density_noise) {
  const int num_classes = field.num_classes();
  check_batch(rays, targets, num_classes);
  if (grad.size() != field.num_params()) throw DomainError("loss_gradients: gradient buffer has the wrong size");
  const std::size_t batch = rays.size();
  if (plan.coarse.size() != batch) {
    plan.coarse.resize(batch);
    for (std::size_t r = 0; r < batch; ++r) {
      plan.coarse[r] = stratified_samples({rays[r].t_near, rays[r].t_far}, config.num_coarse, rng, rng != nullptr);
    }
  }

  struct Pass {
    Matrix<S> pos, dir;
    FieldBatch<S> out;
    NetworkTape<S> tape;
    Eigen::Matrix<S, 1, Eigen::Dynamic> noise;
    std::vector<Eigen::Index> offsets;
    std::vector<CompositeWeights<S>> weights;
    std::vector<std::vector<S>> deltas;
  };
  // Reused across calls so the large tape buffers are not reallocated per chunk.
  thread_local Pass passes[2];
  auto run_pass = [&](NetworkId which, const std::vector<SampleSet>& sets, Pass& p) {
    fill_samples<S>(rays, sets, p.pos, p.dir, p.offsets);
    const bool noisy = rng != nullptr && density_noise > 0.0;
    if (noisy) {
      p.noise.resize(p.pos.cols());
      for (Eigen::Index i = 0; i < p.noise.size(); ++i) p.noise(i) = S(density_noise * rng->normal());
    }
    field.forward(which, p.pos, p.dir, p.out, p.tape, noisy ? &p.noise : nullptr);
    p.weights.resize(batch);
    p.deltas.resize(batch);
    for (std::size_t r = 0; r < batch; ++r) {
      const Eigen::Index k = p.offsets[r + 1] - p.offsets[r];
      p.deltas[r].assign(sets[r].delta.begin(), sets[r].delta.end());
      composite_weights<S>(std::span<const S>(p.out.sigma.data() + p.offsets[r], k), p.deltas[r], p.weights[r]);
    }
  };

  run_pass(NetworkId::Coarse, plan.coarse, passes[0]);
  if (plan.fine.size() != batch) {
    plan.fine.resize(batch);
    for (std::size_t r = 0; r < batch; ++r) {
      const auto& w = passes[0].weights[r].weights;
      std::vector<double> wd(w.data(), w.data() + w.size());
      plan.fine[r] = importance_samples(plan.coarse[r], wd, config.num_fine, rng, config.weight_eps);
    }
  }
  run_pass(NetworkId::Fine, plan.fine, passes[1]);

  LossTerms terms;
  const NetworkId ids[2] = {NetworkId::Coarse, NetworkId::Fine};
  for (int net = 0; net < 2; ++net) {
    Pass& p = passes[net];
    const Eigen::Index n = p.offsets.back();
    Eigen::Matrix<S, 1, Eigen::Dynamic> d_sigma = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(n);
    Matrix<S> d_rgb(3, n), d_logits(num_classes, n);
    Vector<S> d_logits_out(num_classes);
    for (std::size_t r = 0; r < batch; ++r) {
      const Eigen::Index off = p.offsets[r];
      const Eigen::Index k = p.offsets[r + 1] - off;
      const Vector<S>& w = p.weights[r].weights;
      const Eigen::Matrix<S, 3, 1> rgb_hat = p.out.rgb.middleCols(off, k) * w;
      const Vector<S> logits_hat = p.out.logits.middleCols(off, k) * w;

      const Eigen::Matrix<S, 3, 1> diff = rgb_hat - targets[r].rgb.template cast<S>();
      terms.photometric += double(diff.squaredNorm());
      const Eigen::Matrix<S, 3, 1> d_rgb_out = S(2) * diff;
      if (targets[r].labelled()) {
        terms.semantic += cross_entropy<S>(logits_hat, targets[r], &d_logits_out);
        d_logits_out *= S(lambda);
      } else {
        d_logits_out.setZero();
      }
      d_rgb.middleCols(off, k).noalias() = d_rgb_out * w.transpose();
      d_logits.middleCols(off, k).noalias() = d_logits_out * w.transpose();
      Vector<S> g = p.out.rgb.middleCols(off, k).transpose() * d_rgb_out;
      g.noalias() += p.out.logits.middleCols(off, k).transpose() * d_logits_out;
      composite_sigma_backward<S>(p.deltas[r], p.weights[r], g, std::span<S>(d_sigma.data() + off, k));
    }
    field.backward(ids[net], p.tape, d_sigma, d_rgb, d_logits, grad);
  }
  terms.total = terms.photometric + lambda * terms.semantic;
  return terms;
}

template <typename S>
LossTerms evaluate_loss(const FieldEvaluator<S>& field, std::span<const Ray> rays, std::span<const RayTarget> targets,
                        double lambda, const SamplePlan& plan) {
  check_batch(rays, targets, field.num_classes());
  if (plan.coarse.size() != rays.size() || plan.fine.size() != rays.size()) {
    throw DomainError("evaluate_loss: sample plan does not cover the batch");
  }
  std::vector<RenderOutput> outputs(rays.size());
  for (int net = 0; net < 2; ++net) {
    const auto& sets = net == 0 ? plan.coarse : plan.fine;
    Matrix<S> pos, dir;
    std::vector<Eigen::Index> offsets;
    fill_samples<S>(rays, sets, pos, dir, offsets);
    FieldBatch<S> out;
    field.evaluate(net == 0 ? NetworkId::Coarse : NetworkId::Fine, pos, dir, out);
    for (std::size_t r = 0; r < rays.size(); ++r) {
      const Eigen::Index k = offsets[r + 1] - offsets[r];
      std::vector<double> sig(k);
      for (Eigen::Index i = 0; i < k; ++i) sig[i] = double(out.sigma(offsets[r] + i));
      Eigen::MatrixXd payload(3 + field.num_classes(), k);
      payload.topRows(3) = out.rgb.middleCols(offsets[r], k).template cast<double>();
      payload.bottomRows(field.num_classes()) = out.logits.middleCols(offsets[r], k).template cast<double>();
      const CompositeResult res = composite(sig, sets[r].delta, payload);
      Eigen::Vector3d rgb = res.value.head<3>();
      Eigen::VectorXd logits = res.value.tail(field.num_classes());
      if (net == 0) {
        outputs[r].rgb_coarse = rgb;
        outputs[r].logits_coarse = logits;
      } else {
        outputs[r].rgb_fine = rgb;
        outputs[r].logits_fine = logits;
      }
    }
  }
  return total_loss(outputs, targets, lambda);
}

template LossTerms loss_gradients(const Field<float>&, std::span<const Ray>, std::span<const RayTarget>, double,
                                  const RenderConfig&, SamplePlan&, Rng*, std::span<float>, double);
template LossTerms loss_gradients(const Field<double>&, std::span<const Ray>, std::span<const RayTarget>, double,
                                  const RenderConfig&, SamplePlan&, Rng*, std::span<double>, double);
template LossTerms evaluate_loss(const FieldEvaluator<float>&, std::span<const Ray>, std::span<const RayTarget>,
                                 double, const SamplePlan&);
template LossTerms evaluate_loss(const FieldEvaluator<double>&, std::span<const Ray>, std::span<const RayTarget>,
                                 double, const SamplePlan&);

template <typename S>
void adam_step(std::span<S> params, std::span<const S> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DomainError("adam_step: parameter, gradient and moment sizes differ");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = double(grads[i]);
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] = S(double(params[i]) - lr * m_hat / (std::sqrt(v_hat) + state.eps));
  }
}

template void adam_step(std::span<float>, std::span<const float>, AdamState&, double);
template void adam_step(std::span<double>, std::span<const double>, AdamState&, double);

TrainConfig TrainConfig::desk_scale() {
  TrainConfig c;
  c.learning_rate = 5e-4;
  c.iterations = 20000;
  c.batch_size = 256;
  return c;
}

TrainConfig TrainConfig::paper_scale() {
  TrainConfig c;
  c.learning_rate = 5e-4;
  c.iterations = 200000;
  c.batch_size = 1024;
  c.render = RenderConfig::paper_scale();
  return c;
}

void TrainConfig::validate() const {
  if (!(lambda_sem >= 0.0)) throw ConfigError("train: lambda_sem must be >= 0");
  if (!(density_noise_std >= 0.0) || !std::isfinite(density_noise_std)) {
    throw ConfigError("train: density_noise_std must be a finite number >= 0");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0)) throw ConfigError("train: lr_final_fraction in (0, 1]");
  if (iterations < 0) throw ConfigError("train: iterations must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (chunk_size < 1) throw ConfigError("train: chunk_size must be >= 1");
  render.validate();
}

TrainingSet make_training_set(const Dataset& dataset, const SupervisionMask& mask, Bounds bounds,
                              const std::vector<Image<float>>* soft) {
  bounds.validate();
  const int c = dataset.num_classes;
  TrainingSet set;
  std::size_t total = 0;
  for (int f : mask.frames) {
    if (f < 0 || std::size_t(f) >= dataset.frames.size()) throw ConfigError("training frame index out of range");
    total += dataset.frames[f].rgb.num_pixels();
  }
  set.rays.reserve(total);
  set.targets.reserve(total);
  if (soft) {
    if (soft->size() != dataset.frames.size()) throw ConfigError("soft labels must cover every dataset frame");
    set.soft_storage.reserve(total * c);
  }
  const Camera& cam = dataset.camera;
  for (std::size_t i = 0; i < mask.frames.size(); ++i) {
    const int f = mask.frames[i];
    const Frame& fr = dataset.frames[f];
    const bool labelled = mask.labelled[i];
    for (int r = 0; r < cam.height; ++r) {
      for (int col = 0; col < cam.width; ++col) {
        set.rays.push_back(ray_for_pixel(cam, fr.pose, {col, r}, bounds));
        RayTarget t;
        t.rgb = Eigen::Vector3d(fr.rgb.at(col, r, 0), fr.rgb.at(col, r, 1), fr.rgb.at(col, r, 2));
        if (labelled) {
          t.label = fr.labels.at(col, r);
          if (soft && t.label != kVoidLabel) {
            const Image<float>& probs = (*soft)[f];
            const std::size_t start = set.soft_storage.size();
            for (int ch = 0; ch < c; ++ch) set.soft_storage.push_back(probs.at(col, r, ch));
            t.soft = std::span<const float>(set.soft_storage.data() + start, c);
          }
        }
        if (t.labelled()) ++set.labelled_rays;
        set.targets.push_back(t);
      }
    }
  }
  return set;
}

TrainResult train(const TrainingSet& data, const FieldConfig& field_config, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  if (data.rays.empty()) throw ConfigError("train: empty training set");
  if (config.lambda_sem > 0.0 && data.labelled_rays == 0) {
    throw ConfigError("train: semantic loss enabled but no labelled, non-void pixel exists");
  }
  TrainResult result;
  result.field = Field<float>(field_config);
  const Rng root(config.seed);
  result.field.initialize(root.derive("init").next_u64());
  Field<float>& field = result.field;
  const std::size_t n = field.num_params();
  AdamState state(n);

  Rng batch_rng = root.derive("batch");
  const Rng sample_root = root.derive("samples");
  const std::size_t chunks = (std::size_t(config.batch_size) + config.chunk_size - 1) / config.chunk_size;
  std::vector<ParamVector<float>> chunk_grads(chunks, ParamVector<float>(n));
  std::vector<LossTerms> chunk_terms(chunks);
  std::vector<std::size_t> picks(config.batch_size);
  ParamVector<float> grad(n);
  const int threads = resolve_threads(config.threads);

  for (int it = 0; it < config.iterations; ++it) {
    for (auto& p : picks) p = std::size_t(batch_rng.below(data.rays.size()));
    try {
      parallel_for(chunks, threads, [&](std::size_t c) {
        const std::size_t begin = c * config.chunk_size;
        const std::size_t end = std::min<std::size_t>(picks.size(), begin + config.chunk_size);
        std::vector<Ray> rays;
        std::vector<RayTarget> targets;
        rays.reserve(end - begin);
        targets.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
          rays.push_back(data.rays[picks[i]]);
          targets.push_back(data.targets[picks[i]]);
        }
        std::fill(chunk_grads[c].begin(), chunk_grads[c].end(), 0.0f);
        Rng rng = sample_root.derive(std::uint64_t(it) * chunks + c);
        SamplePlan plan;
        chunk_terms[c] = loss_gradients<float>(field, rays, targets, config.lambda_sem, config.render, plan, &rng,
                                               chunk_grads[c], config.density_noise_std);
      });
    } catch (const DomainError& e) {
      // After the first update a numeric failure inside the field means the
      // parameters have blown up, not that the inputs were malformed.
      if (it == 0) throw;
      throw DivergenceError("training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    // Fixed reduction order keeps the update independent of the thread count.
    LossTerms terms;
    std::fill(grad.begin(), grad.end(), 0.0f);
    for (std::size_t c = 0; c < chunks; ++c) {
      terms += chunk_terms[c];
      for (std::size_t i = 0; i < n; ++i) grad[i] += chunk_grads[c][i];
    }
    if (!std::isfinite(terms.total)) {
      throw DivergenceError("training diverged at iteration " + std::to_string(it) + ": L_p = " +
                            std::to_string(terms.photometric) + ", L_s = " + std::to_string(terms.semantic));
    }
    const double progress = config.iterations > 1 ? double(it) / double(config.iterations - 1) : 0.0;
    const double lr = config.learning_rate * (config.lr_decay ? std::pow(config.lr_final_fraction, progress) : 1.0);
    adam_step<float>(field.params(), grad, state, lr);
    if (!std::all_of(field.params().begin(), field.params().end(), [](float v) { return std::isfinite(v); })) {
      throw DivergenceError("parameters became non-finite at iteration " + std::to_string(it));
    }

    const LossRecord record{it, terms};
    result.trace.push_back(record);
    if (hooks.on_log && config.log_every > 0 && (it % config.log_every == 0 || it + 1 == config.iterations)) {
      hooks.on_log(record);
    }
    if (!hooks.checkpoint_path.empty() && config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0) {
      save_checkpoint(hooks.checkpoint_path, field, it + 1);
    }
  }
  if (!hooks.checkpoint_path.empty()) save_checkpoint(hooks.checkpoint_path, field, config.iterations);
  return result;
}

void write_loss_trace(const std::filesystem::path& path, std::span<const LossRecord> trace) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "iteration,photometric,semantic,total\n" << std::setprecision(9);
  for (const auto& r : trace) {
    out << r.iteration << "," << r.loss.photometric << "," << r.loss.semantic << "," << r.loss.total << "\n";
  }
}

}  // namespace snerf
