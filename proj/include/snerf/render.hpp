#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "snerf/field.hpp"
#include "snerf/geometry.hpp"
#include "snerf/image.hpp"
#include "snerf/rng.hpp"

namespace snerf {

struct RenderConfig {
  int num_coarse = 32;
  int num_fine = 32;
  Bounds bounds{0.1, 10.0};
  double weight_eps = 1e-5;     ///< added to coarse weights before building the importance CDF
  bool normalized_depth = false;  ///< divide expected depth by the accumulated weight
  int threads = 1;              ///< <= 0 means all hardware threads

  static RenderConfig desk_scale();
  static RenderConfig paper_scale();
  void validate() const;
  bool operator==(const RenderConfig&) const = default;
};

/// Sorted sample distances along a ray. delta[k] = t[k+1] - t[k]; the last
/// interval runs to t_far.
struct SampleSet {
  std::vector<double> t;
  std::vector<double> delta;
  double t_near = 0.0;
  double t_far = 0.0;

  std::size_t size() const { return t.size(); }
};

/// Builds deltas for an already sorted list of distances inside [t_near, t_far).
SampleSet make_sample_set(std::vector<double> t, double t_near, double t_far);

/// One sample per equal-width bin of [t_near, t_far]: bin midpoints when
/// `jitter` is false, uniform inside the bin otherwise (rng required).
SampleSet stratified_samples(Bounds bounds, int count, Rng* rng, bool jitter);

/// Draws `count` distances by inverse-CDF from the piecewise-constant pdf
/// proportional to (weights + eps) over the cells owned by each coarse sample,
/// then merges them with the coarse samples. rng == nullptr uses the
/// deterministic quantiles (j + 0.5) / count.
SampleSet importance_samples(const SampleSet& coarse, std::span<const double> weights, int count, Rng* rng,
                             double eps = 1e-5);

template <typename S>
struct CompositeWeights {
  Eigen::Matrix<S, Eigen::Dynamic, 1> weights;        ///< K
  Eigen::Matrix<S, Eigen::Dynamic, 1> transmittance;  ///< K + 1; entry k is T before sample k
};

/// w_k = T_k (1 - exp(-sigma_k delta_k)), T_k = exp(-sum_{j<k} sigma_j delta_j).
/// Unchecked; callers guarantee sigma >= 0 and delta > 0.
template <typename S>
void composite_weights(std::span<const S> sigmas, std::span<const S> deltas, CompositeWeights<S>& out);

/// Reverse pass for one ray: given g_k = dL/dO . value_k, adds dL/dsigma_k to d_sigma.
template <typename S>
void composite_sigma_backward(std::span<const S> deltas, const CompositeWeights<S>& fwd,
                              const Eigen::Matrix<S, Eigen::Dynamic, 1>& g, std::span<S> d_sigma);

struct CompositeResult {
  Eigen::VectorXd value;  ///< sum_k w_k * values.col(k)
  Eigen::VectorXd weights;
  Eigen::VectorXd transmittance;  ///< K + 1 entries
};

/// Checked compositing of an arbitrary per-sample payload (one column per
/// sample). The same weights serve colour, logits and depth.
CompositeResult composite(std::span<const double> sigmas, std::span<const double> deltas,
                          const Eigen::MatrixXd& values);

struct RenderOutput {
  Eigen::Vector3d rgb_coarse = Eigen::Vector3d::Zero();
  Eigen::Vector3d rgb_fine = Eigen::Vector3d::Zero();
  Eigen::VectorXd logits_coarse;
  Eigen::VectorXd logits_fine;
  Eigen::VectorXd probabilities;  ///< softmax of the fine logits
  double depth = 0.0;
  double accumulation = 0.0;  ///< sum of fine weights
  std::vector<double> t;      ///< fine sample distances
  std::vector<double> weights;
  std::vector<double> transmittance;
  double entropy = 0.0;  ///< nats
  int label = 0;         ///< argmax, ties to the lowest id
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
double entropy(const Eigen::VectorXd& probabilities);
int argmax_label(const Eigen::VectorXd& scores);

/// Coarse pass on stratified samples, fine pass on importance-merged samples.
/// rng == nullptr renders deterministically (midpoints, fixed quantiles).
template <typename S>
std::vector<RenderOutput> render_rays(const FieldEvaluator<S>& field, std::span<const Ray> rays,
                                      const RenderConfig& config, Rng* rng = nullptr);

template <typename S>
RenderOutput render_ray(const FieldEvaluator<S>& field, const Ray& ray, const RenderConfig& config,
                        Rng* rng = nullptr);

struct RenderedImage {
  RgbImage rgb;
  LabelImage labels;
  DepthImage depth;
  Image<float> entropy;
  Image<float> probabilities;  ///< C channels
};

RenderedImage render_image(const FieldEvaluator<float>& field, const Camera& camera, const Pose& pose,
                           const RenderConfig& config);

}  // namespace snerf
