#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "snerf/dataset.hpp"
#include "snerf/field.hpp"
#include "snerf/render.hpp"

namespace snerf {

/// Supervision for one ray. A ray is semantically unlabelled when `label` is
/// void and `soft` is empty; `soft`, when set, is a C-vector distribution.
struct RayTarget {
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
  std::uint8_t label = kVoidLabel;
  std::span<const float> soft;

  bool labelled() const { return label != kVoidLabel || !soft.empty(); }
};

struct LossTerms {
  double photometric = 0.0;
  double semantic = 0.0;
  double total = 0.0;

  LossTerms& operator+=(const LossTerms& o) {
    photometric += o.photometric;
    semantic += o.semantic;
    total += o.total;
    return *this;
  }
};

/// sum over rays of |C_c - C|^2 + |C_f - C|^2
double photometric_loss(std::span<const RenderOutput> outputs, std::span<const RayTarget> targets);
/// sum over labelled rays of CE(softmax S_c, p) + CE(softmax S_f, p); void rays contribute nothing
double semantic_loss(std::span<const RenderOutput> outputs, std::span<const RayTarget> targets);
/// L_p + lambda * L_s
LossTerms total_loss(std::span<const RenderOutput> outputs, std::span<const RayTarget> targets, double lambda);

/// Sample positions used for one batch. Filled on first use; pass a filled
/// plan back in to evaluate the loss at exactly the same positions.
struct SamplePlan {
  std::vector<SampleSet> coarse;
  std::vector<SampleSet> fine;
};

/// Exact reverse-mode gradient of L_p + lambda L_s with respect to all field
/// parameters, accumulated into `grad`. Fine-pass sample positions are
/// treated as constants. Empty plan entries are generated with `rng`
/// (nullptr = deterministic midpoints and quantiles). With `rng` and a
/// positive `density_noise`, Gaussian noise of that standard deviation is
/// added to every sample's raw density.
template <typename S>
LossTerms loss_gradients(const Field<S>& field, std::span<const Ray> rays, std::span<const RayTarget> targets,
                         double lambda, const RenderConfig& config, SamplePlan& plan, Rng* rng, std::span<S> grad,
                         double density_noise = 0.0);

/// Loss at fixed sample positions through the checked compositing routine;
/// independent of the gradient code path.
template <typename S>
LossTerms evaluate_loss(const FieldEvaluator<S>& field, std::span<const Ray> rays, std::span<const RayTarget> targets,
                        double lambda, const SamplePlan& plan);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update in place.
template <typename S>
void adam_step(std::span<S> params, std::span<const S> grads, AdamState& state, double lr);

struct TrainConfig {
  double lambda_sem = 0.04;
  double learning_rate = 5e-4;
  bool lr_decay = true;
  double lr_final_fraction = 0.1;  ///< exponential decay reaches lr * fraction at the last iteration
  int iterations = 20000;
  int batch_size = 256;
  int chunk_size = 64;  ///< rays per gradient work unit; fixed so results do not depend on thread count
  RenderConfig render;
  std::uint64_t seed = 0;
  int threads = 1;  ///< <= 0 uses every hardware thread
  int checkpoint_every = 0;
  int log_every = 100;
  double density_noise_std = 0.0;  ///< raw-density noise during training; 0 disables it

  static TrainConfig desk_scale();
  static TrainConfig paper_scale();
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Every pixel of the training frames as a ray + target.
struct TrainingSet {
  std::vector<Ray> rays;
  std::vector<RayTarget> targets;
  std::vector<float> soft_storage;
  std::size_t labelled_rays = 0;
};

/// Photometric supervision from every training frame; labels only from
/// frames the mask marks as labelled. `soft` optionally supplies per-pixel
/// distributions (one C-channel image per dataset frame).
TrainingSet make_training_set(const Dataset& dataset, const SupervisionMask& mask, Bounds bounds,
                              const std::vector<Image<float>>* soft = nullptr);

struct LossRecord {
  int iteration = 0;
  LossTerms loss;
};

struct TrainResult {
  Field<float> field;
  std::vector<LossRecord> trace;
};

struct TrainHooks {
  std::function<void(const LossRecord&)> on_log;
  std::filesystem::path checkpoint_path;  ///< written every checkpoint_every iterations and at the end
};

/// Runs the joint optimisation. Throws DivergenceError on a non-finite loss.
TrainResult train(const TrainingSet& data, const FieldConfig& field_config, const TrainConfig& config,
                  const TrainHooks& hooks = {});

void write_loss_trace(const std::filesystem::path& path, std::span<const LossRecord> trace);

}  // namespace snerf
