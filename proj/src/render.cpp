#include "snerf/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "snerf/errors.hpp"
#include "snerf/parallel.hpp"

namespace snerf {

RenderConfig RenderConfig::desk_scale() { return RenderConfig{}; }

RenderConfig RenderConfig::paper_scale() {
  RenderConfig c;
  c.num_coarse = 64;
  c.num_fine = 128;
  return c;
}

void RenderConfig::validate() const {
  if (num_coarse < 1 || num_fine < 0) throw ConfigError("render: need num_coarse >= 1 and num_fine >= 0");
  if (!(weight_eps >= 0.0)) throw ConfigError("render: weight_eps must be >= 0");
  try {
    bounds.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("render: ") + e.what());
  }
}

SampleSet make_sample_set(std::vector<double> t, double t_near, double t_far) {
  SampleSet s;
  s.t_near = t_near;
  s.t_far = t_far;
  s.t = std::move(t);
  s.delta.resize(s.t.size());
  for (std::size_t k = 0; k + 1 < s.t.size(); ++k) s.delta[k] = s.t[k + 1] - s.t[k];
  if (!s.t.empty()) s.delta.back() = t_far - s.t.back();
  return s;
}

SampleSet stratified_samples(Bounds bounds, int count, Rng* rng, bool jitter) {
  bounds.validate();
  if (count < 1) throw DomainError("stratified_samples: count must be >= 1");
  if (jitter && rng == nullptr) throw DomainError("stratified_samples: jitter requires an rng");
  const double width = (bounds.t_far - bounds.t_near) / count;
  std::vector<double> t(count);
  for (int k = 0; k < count; ++k) {
    const double lo = bounds.t_near + k * width;
    const double offset = jitter ? rng->uniform() : 0.5;
    t[k] = std::min(lo + offset * width, std::nextafter(bounds.t_far, bounds.t_near));
  }
  return make_sample_set(std::move(t), bounds.t_near, bounds.t_far);
}

SampleSet importance_samples(const SampleSet& coarse, std::span<const double> weights, int count, Rng* rng,
                             double eps) {
  const std::size_t k = coarse.size();
  if (weights.size() != k || k == 0) throw DomainError("importance_samples: weights must match the coarse samples");
  if (count < 0) throw DomainError("importance_samples: negative sample count");

  // Cell k spans the midpoints around coarse sample k.
  std::vector<double> edges(k + 1);
  edges[0] = coarse.t_near;
  for (std::size_t i = 1; i < k; ++i) edges[i] = 0.5 * (coarse.t[i - 1] + coarse.t[i]);
  edges[k] = coarse.t_far;

  std::vector<double> cdf(k + 1, 0.0);
  for (std::size_t i = 0; i < k; ++i) cdf[i + 1] = cdf[i] + std::max(weights[i], 0.0) + eps;
  const double total = cdf[k];
  if (!(total > 0.0)) throw DomainError("importance_samples: degenerate pdf (all weights zero and eps = 0)");

  std::vector<double> t = coarse.t;
  t.reserve(k + count);
  for (int j = 0; j < count; ++j) {
    const double u = ((rng ? rng->uniform() : 0.5) + j) / count * total;
    std::size_t cell = std::size_t(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    cell = std::clamp<std::size_t>(cell, 1, k) - 1;
    const double mass = cdf[cell + 1] - cdf[cell];
    const double frac = mass > 0.0 ? std::clamp((u - cdf[cell]) / mass, 0.0, 1.0) : 0.5;
    t.push_back(edges[cell] + frac * (edges[cell + 1] - edges[cell]));
  }
  std::sort(t.begin(), t.end());
  // Keep the set strictly increasing and strictly below t_far.
  const double top = std::nextafter(coarse.t_far, coarse.t_near);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = std::min(t[i], top);
    if (i > 0 && t[i] <= t[i - 1]) t[i] = std::nextafter(t[i - 1], coarse.t_far);
  }
  for (std::size_t i = t.size(); i-- > 1;) {
    if (t[i] >= coarse.t_far) t[i] = top;
    if (t[i - 1] >= t[i]) t[i - 1] = std::nextafter(t[i], coarse.t_near);
  }
  return make_sample_set(std::move(t), coarse.t_near, coarse.t_far);
}

template <typename S>
void composite_weights(std::span<const S> sigmas, std::span<const S> deltas, CompositeWeights<S>& out) {
  const std::size_t k = sigmas.size();
  out.weights.resize(k);
  out.transmittance.resize(k + 1);
  S trans = S(1);
  for (std::size_t i = 0; i < k; ++i) {
    const S tau = sigmas[i] * deltas[i];
    out.transmittance(i) = trans;
    out.weights(i) = trans * -std::expm1(-tau);
    trans *= std::exp(-tau);
  }
  out.transmittance(k) = trans;
}

template <typename S>
void composite_sigma_backward(std::span<const S> deltas, const CompositeWeights<S>& fwd,
                              const Eigen::Matrix<S, Eigen::Dynamic, 1>& g, std::span<S> d_sigma) {
  // dw_i/dsigma_k = delta_k T_{k+1} for i = k and -delta_k w_i for i > k.
  S suffix = S(0);
  for (std::size_t i = deltas.size(); i-- > 0;) {
    d_sigma[i] += deltas[i] * (fwd.transmittance(i + 1) * g(i) - suffix);
    suffix += fwd.weights(i) * g(i);
  }
}

template void composite_weights(std::span<const float>, std::span<const float>, CompositeWeights<float>&);
template void composite_weights(std::span<const double>, std::span<const double>, CompositeWeights<double>&);
template void composite_sigma_backward(std::span<const float>, const CompositeWeights<float>&,
                                       const Eigen::VectorXf&, std::span<float>);
template void composite_sigma_backward(std::span<const double>, const CompositeWeights<double>&,
                                       const Eigen::VectorXd&, std::span<double>);

CompositeResult composite(std::span<const double> sigmas, std::span<const double> deltas,
                          const Eigen::MatrixXd& values) {
  if (sigmas.size() != deltas.size() || Eigen::Index(sigmas.size()) != values.cols()) {
    throw DomainError("composite: sigmas, deltas and payload must have the same length");
  }
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] >= 0.0)) throw DomainError("composite: negative or NaN density");
    if (!(deltas[i] > 0.0)) throw DomainError("composite: non-positive interval");
  }
  CompositeWeights<double> w;
  composite_weights(sigmas, deltas, w);
  CompositeResult r;
  r.value = values * w.weights;
  r.weights = std::move(w.weights);
  r.transmittance = std::move(w.transmittance);
  return r;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) return logits;
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

double entropy(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  }
  return std::max(h, 0.0);
}

int argmax_label(const Eigen::VectorXd& scores) {
  int best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = int(i);
  }
  return best;
}

namespace {

template <typename S>
void fill_samples(std::span<const Ray> rays, const std::vector<SampleSet>& sets, Matrix<S>& positions,
                  Matrix<S>& directions) {
  Eigen::Index total = 0;
  for (const auto& s : sets) total += Eigen::Index(s.size());
  positions.resize(3, total);
  directions.resize(3, total);
  Eigen::Index col = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (double t : sets[r].t) {
      positions.col(col) = rays[r].at(t).template cast<S>();
      directions.col(col) = rays[r].direction.template cast<S>();
      ++col;
    }
  }
}

}  // namespace

template <typename S>
std::vector<RenderOutput> render_rays(const FieldEvaluator<S>& field, std::span<const Ray> rays,
                                      const RenderConfig& config, Rng* rng) {
  const bool jitter = rng != nullptr;
  std::vector<SampleSet> coarse(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    coarse[r] = stratified_samples({rays[r].t_near, rays[r].t_far}, config.num_coarse, rng, jitter);
  }
  Matrix<S> pos, dir;
  FieldBatch<S> out;
  fill_samples<S>(rays, coarse, pos, dir);
  field.evaluate(NetworkId::Coarse, pos, dir, out);

  std::vector<RenderOutput> results(rays.size());
  std::vector<SampleSet> fine(rays.size());
  CompositeWeights<S> w;
  std::vector<S> deltas;
  Eigen::Index col = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const Eigen::Index k = Eigen::Index(coarse[r].size());
    deltas.assign(coarse[r].delta.begin(), coarse[r].delta.end());
    composite_weights<S>(std::span<const S>(out.sigma.data() + col, k), deltas, w);
    results[r].rgb_coarse = (out.rgb.middleCols(col, k) * w.weights).template cast<double>();
    results[r].logits_coarse = (out.logits.middleCols(col, k) * w.weights).template cast<double>();
    const std::vector<double> wd(w.weights.data(), w.weights.data() + k);
    fine[r] = importance_samples(coarse[r], wd, config.num_fine, rng, config.weight_eps);
    col += k;
  }

  fill_samples<S>(rays, fine, pos, dir);
  field.evaluate(NetworkId::Fine, pos, dir, out);
  col = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    RenderOutput& res = results[r];
    const Eigen::Index k = Eigen::Index(fine[r].size());
    deltas.assign(fine[r].delta.begin(), fine[r].delta.end());
    composite_weights<S>(std::span<const S>(out.sigma.data() + col, k), deltas, w);
    res.rgb_fine = (out.rgb.middleCols(col, k) * w.weights).template cast<double>();
    res.logits_fine = (out.logits.middleCols(col, k) * w.weights).template cast<double>();
    res.t = fine[r].t;
    res.weights.assign(w.weights.data(), w.weights.data() + k);
    res.transmittance.assign(w.transmittance.data(), w.transmittance.data() + k + 1);
    res.accumulation = std::accumulate(res.weights.begin(), res.weights.end(), 0.0);
    double depth = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) depth += res.weights[i] * res.t[i];
    if (config.normalized_depth) depth = res.accumulation > 1e-6 ? depth / res.accumulation : 0.0;
    res.depth = depth;
    res.probabilities = softmax(res.logits_fine);
    res.entropy = entropy(res.probabilities);
    res.label = argmax_label(res.probabilities);
    col += k;
  }
  return results;
}

template <typename S>
RenderOutput render_ray(const FieldEvaluator<S>& field, const Ray& ray, const RenderConfig& config, Rng* rng) {
  return render_rays<S>(field, std::span<const Ray>(&ray, 1), config, rng).front();
}

template std::vector<RenderOutput> render_rays(const FieldEvaluator<float>&, std::span<const Ray>,
                                               const RenderConfig&, Rng*);
template std::vector<RenderOutput> render_rays(const FieldEvaluator<double>&, std::span<const Ray>,
                                               const RenderConfig&, Rng*);
template RenderOutput render_ray(const FieldEvaluator<float>&, const Ray&, const RenderConfig&, Rng*);
template RenderOutput render_ray(const FieldEvaluator<double>&, const Ray&, const RenderConfig&, Rng*);

RenderedImage render_image(const FieldEvaluator<float>& field, const Camera& camera, const Pose& pose,
                           const RenderConfig& config) {
  camera.validate();
  const int c = field.num_classes();
  RenderedImage img;
  img.rgb = RgbImage(camera.width, camera.height, 3);
  img.labels = LabelImage(camera.width, camera.height, 1);
  img.depth = DepthImage(camera.width, camera.height, 1);
  img.entropy = Image<float>(camera.width, camera.height, 1);
  img.probabilities = Image<float>(camera.width, camera.height, c);

  constexpr std::size_t kChunk = 256;
  const std::size_t n = camera.num_pixels();
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, resolve_threads(config.threads), [&](std::size_t chunk) {
    const std::size_t begin = chunk * kChunk;
    const std::size_t end = std::min(n, begin + kChunk);
    std::vector<Ray> rays;
    rays.reserve(end - begin);
    for (std::size_t p = begin; p < end; ++p) {
      rays.push_back(ray_for_pixel(camera, pose, {int(p % camera.width), int(p / camera.width)}, config.bounds));
    }
    const auto outs = render_rays<float>(field, rays, config, nullptr);
    for (std::size_t p = begin; p < end; ++p) {
      const RenderOutput& o = outs[p - begin];
      for (int ch = 0; ch < 3; ++ch) img.rgb.data[p * 3 + ch] = float(std::clamp(o.rgb_fine(ch), 0.0, 1.0));
      img.labels.data[p] = std::uint8_t(o.label);
      img.depth.data[p] = float(o.depth);
      img.entropy.data[p] = float(o.entropy);
      for (int ch = 0; ch < c; ++ch) img.probabilities.data[p * c + ch] = float(o.probabilities(ch));
    }
  });
  return img;
}

}  // namespace snerf
