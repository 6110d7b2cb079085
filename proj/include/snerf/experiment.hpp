#pragma once
// Experiment plumbing shared by the command line tool and the acceptance
// runner: one declarative config, and the gen -> degrade -> train -> render
// -> eval steps as plain functions.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "snerf/dataset.hpp"
#include "snerf/field.hpp"
#include "snerf/fusion.hpp"
#include "snerf/labelops.hpp"
#include "snerf/meshing.hpp"
#include "snerf/render.hpp"
#include "snerf/synthgen.hpp"
#include "snerf/train.hpp"

namespace snerf {

struct CameraSpec {
  int width = 64;
  int height = 48;
  double hfov_deg = 70.0;

  Camera camera() const;
  bool operator==(const CameraSpec&) const = default;
};

enum class DegradationKind { None, Sparsity, PixelNoise, RegionNoise, Downscale, Partial, FusionSim };

/// Exactly one label degradation, applied to the training frames only.
struct DegradationSpec {
  DegradationKind kind = DegradationKind::None;
  double ratio = 0.0;             ///< sparsity, pixel or region noise ratio
  std::vector<int> keyframes;     ///< Sparsity: manual choice, overrides ratio when non-empty
  int target_class = 2;           ///< RegionNoise
  RegionCriterion criterion = RegionCriterion::Sort;
  int factor = 4;                 ///< Downscale
  DownscaleMode mode = DownscaleMode::SparseVoid;
  PartialBudget budget = PartialBudget::click();
  CnnSimulation cnn;              ///< FusionSim

  void validate() const;
  bool operator==(const DegradationSpec&) const;
};

enum class EvalTarget { Test, Train };

struct EvalSpec {
  std::vector<EvalTarget> targets{EvalTarget::Test};
  bool depth = true;
  bool operator==(const EvalSpec&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  SceneSpec scene;
  TrajectorySpec trajectory;
  CameraSpec camera;
  int split_stride = 5;
  int test_frames = 8;  ///< evenly spaced subset of the midpoint test frames; 0 keeps all
  FieldConfig field;
  TrainConfig train;
  DegradationSpec degradation;
  EvalSpec eval;

  /// "desk-scale", "desk-quick" or "paper-scale".
  static ExperimentConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

void to_json(nlohmann::json& j, const DegradationSpec& d);
void from_json(const nlohmann::json& j, DegradationSpec& d);
void to_json(nlohmann::json& j, const EvalSpec& e);
void from_json(const nlohmann::json& j, EvalSpec& e);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Absent keys keep the values of `base`.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const ExperimentConfig& base = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path, const ExperimentConfig& base = {});
void save_experiment_config(const std::filesystem::path& path, const ExperimentConfig& config);

std::string to_string(DegradationKind kind);
DegradationKind degradation_kind_from_string(const std::string& s);

/// Frame indices used by an experiment.
struct ExperimentSplit {
  std::vector<int> train;
  std::vector<int> test;
};
ExperimentSplit experiment_split(const ExperimentConfig& config, std::size_t num_frames);

/// Scene and trajectory draw their seeds from the experiment seed.
SceneModel experiment_scene(const ExperimentConfig& config);
Dataset generate_dataset(const ExperimentConfig& config);

/// Degraded copy of `clean`: training-frame labels replaced according to the
/// degradation spec, every other frame untouched.
struct DegradedData {
  Dataset dataset;
  /// FusionSim only: the simulated per-frame class distributions (every frame).
  std::vector<ProbabilityMap> predictions;
};
DegradedData degrade(const Dataset& clean, const ExperimentConfig& config);

/// Trains on every training frame of `data`; void pixels carry no semantic loss.
TrainResult train_experiment(const Dataset& data, const ExperimentConfig& config, const TrainHooks& hooks = {});

std::vector<RenderedImage> render_frames(const FieldEvaluator<float>& field, const Dataset& dataset,
                                         std::span<const int> frames, const RenderConfig& config);

/// Segmentation against the reference labels, PSNR against the reference RGB
/// and, when asked and available, depth error against the reference depth.
MetricsReport evaluate_frames(const std::string& name, std::span<const RenderedImage> rendered,
                              const Dataset& reference, std::span<const int> frames, bool depth);

/// Scores the labels themselves (e.g. the degraded input) against reference.
MetricsReport evaluate_labels(const std::string& name, std::span<const LabelImage> labels,
                              const Dataset& reference, std::span<const int> frames);

/// Rows "monocular", "average", "bayesian" and, when a field is given,
/// "nerf", each scored on the training frames against the clean labels.
/// Multi-view fusion uses every training frame as the window. Learned depth
/// is rendered from `field` and therefore requires it.
std::vector<MetricsReport> fusion_comparison(const Dataset& clean, const DegradedData& degraded,
                                             const ExperimentConfig& config, const FieldEvaluator<float>* field,
                                             DepthSource depth_source = DepthSource::GroundTruth);

struct MeshSettings {
  int resolution = 64;
  double iso = 5.0;  ///< density threshold, 1/m
};

/// Marching cubes over the scene's world box, labelled by volume rendering.
SemanticMesh extract_semantic_mesh(const FieldEvaluator<float>& field, const ExperimentConfig& config,
                                   const MeshSettings& settings);

}  // namespace snerf
