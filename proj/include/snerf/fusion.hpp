#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "snerf/dataset.hpp"
#include "snerf/field.hpp"
#include "snerf/render.hpp"

namespace snerf {

/// Per-pixel class distribution: an Image<float> with C channels.
using ProbabilityMap = Image<float>;

inline constexpr double kFusionFloor = 1e-12;

/// Componentwise product (each factor floored at kFusionFloor), renormalised.
Eigen::VectorXd bayesian_fuse(std::span<const Eigen::VectorXd> distributions);
/// Arithmetic mean.
Eigen::VectorXd average_fuse(std::span<const Eigen::VectorXd> distributions);

/// 1 - eta on the observed class and eta / (C - 1) elsewhere; void pixels
/// become uniform.
ProbabilityMap soften_labels(const LabelImage& labels, int num_classes, double eta);

LabelImage argmax_labels(const ProbabilityMap& probs);

enum class FusionMethod { Bayesian, Average };
enum class DepthSource { GroundTruth, Learned };

struct FusionSettings {
  FusionMethod method = FusionMethod::Bayesian;
  DepthSource depth_source = DepthSource::GroundTruth;
  double depth_tolerance = 0.05;  ///< metres; reprojected vs observed ray distance
  int threads = 1;
};

struct FusedFrame {
  LabelImage labels;
  ProbabilityMap probabilities;
};

/// Fuses the distributions of every window frame that observes each target
/// pixel (nearest pixel after reprojection, kept when the depths agree within
/// the tolerance) together with the target's own distribution.
/// `learned_depth` holds one depth map per dataset frame and is required when
/// the depth source is Learned.
FusedFrame fuse_to_frame(const Dataset& dataset, std::span<const ProbabilityMap> probs, int target,
                         std::span<const int> window, const FusionSettings& settings,
                         std::span<const DepthImage> learned_depth = {});

/// Simulated segmentation-network output: region then pixel corruption of the
/// clean labels, softened into distributions.
struct CnnSimulation {
  int region_class = 2;
  double region_ratio = 0.3;
  double pixel_ratio = 0.3;
  double eta = 0.1;
};

std::vector<ProbabilityMap> simulate_cnn_predictions(const Dataset& dataset, const CnnSimulation& sim, Rng& rng);

/// Renders the trained field at each given dataset frame and returns the
/// argmax labels (the training-as-fusion result).
std::vector<LabelImage> nerf_fusion_render(const FieldEvaluator<float>& field, const Dataset& dataset,
                                           std::span<const int> frames, const RenderConfig& config);

}  // namespace snerf
