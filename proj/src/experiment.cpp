#include "snerf/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "snerf/errors.hpp"
#include "snerf/serialize.hpp"

namespace snerf {

using nlohmann::json;
using json_util::read;
using json_util::require_object;

Camera CameraSpec::camera() const {
  if (width < 1 || height < 1) throw ConfigError("camera: width and height must be positive");
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0)) throw ConfigError("camera: hfov_deg must lie in (0, 180)");
  return Camera::from_hfov(width, height, hfov_deg);
}

void DegradationSpec::validate() const {
  switch (kind) {
    case DegradationKind::None:
      break;
    case DegradationKind::Sparsity:
      if (keyframes.empty() && !(ratio >= 0.0 && ratio < 1.0)) {
        throw ConfigError("degradation: sparsity ratio must lie in [0, 1)");
      }
      break;
    case DegradationKind::PixelNoise:
    case DegradationKind::RegionNoise:
      if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("degradation: noise ratio must lie in [0, 1]");
      break;
    case DegradationKind::Downscale:
      if (factor < 1) throw ConfigError("degradation: downscale factor must be >= 1");
      break;
    case DegradationKind::Partial:
      if (!budget.single_click && !(budget.fraction > 0.0 && budget.fraction <= 1.0)) {
        throw ConfigError("degradation: partial fraction must lie in (0, 1]");
      }
      break;
    case DegradationKind::FusionSim:
      if (!(cnn.eta >= 0.0 && cnn.eta < 1.0)) throw ConfigError("degradation: cnn eta must lie in [0, 1)");
      break;
  }
}

bool DegradationSpec::operator==(const DegradationSpec& o) const {
  return kind == o.kind && ratio == o.ratio && keyframes == o.keyframes && target_class == o.target_class &&
         criterion == o.criterion && factor == o.factor && mode == o.mode &&
         budget.single_click == o.budget.single_click && budget.fraction == o.budget.fraction &&
         cnn.region_class == o.cnn.region_class && cnn.region_ratio == o.cnn.region_ratio &&
         cnn.pixel_ratio == o.cnn.pixel_ratio && cnn.eta == o.cnn.eta;
}

ExperimentConfig ExperimentConfig::preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.trajectory.num_poses = 200;
  c.train = TrainConfig::desk_scale();
  c.train.render.bounds = {0.1, 6.5};
  // Without it the flat-shaded walls end up as diffuse haze and depth is off by ~25%.
  c.train.density_noise_std = 1.0;
  c.field = FieldConfig::desk_scale(c.scene.num_classes);
  // The room maps into [-1, 1] before positional encoding.
  const double extent = std::max(c.scene.world_min.cwiseAbs().maxCoeff(), c.scene.world_max.cwiseAbs().maxCoeff());
  c.field.encoding.position_scale = 1.0 / extent;
  if (name == "desk-scale") return c;
  if (name == "desk-quick") {
    c.train.iterations = 2000;
    c.train.learning_rate = 5e-3;
    c.train.render.num_coarse = 16;
    c.train.render.num_fine = 16;
    return c;
  }
  if (name == "paper-scale") {
    c.camera = {320, 240, 90.0};
    c.trajectory.num_poses = 900;
    c.test_frames = 0;
    c.field = FieldConfig::paper_scale(c.scene.num_classes);
    c.field.encoding.position_scale = 1.0 / extent;
    const Bounds b = c.train.render.bounds;
    c.train = TrainConfig::paper_scale();
    c.train.render.bounds = b;
    return c;
  }
  throw ConfigError("unknown preset \"" + name + "\"");
}

std::vector<std::string> ExperimentConfig::preset_names() { return {"desk-scale", "desk-quick", "paper-scale"}; }

void ExperimentConfig::validate() const {
  scene.validate();
  trajectory.validate();
  (void)camera.camera();
  if (split_stride < 1) throw ConfigError("split_stride must be >= 1");
  if (test_frames < 0) throw ConfigError("test_frames must be >= 0");
  field.validate();
  train.validate();
  degradation.validate();
  if (field.num_classes != scene.num_classes) {
    throw ConfigError("field.num_classes (" + std::to_string(field.num_classes) + ") differs from scene.num_classes (" +
                      std::to_string(scene.num_classes) + ")");
  }
  if (degradation.kind == DegradationKind::RegionNoise &&
      (degradation.target_class < 0 || degradation.target_class >= scene.num_classes)) {
    throw ConfigError("degradation: target_class out of range");
  }
}

// --- JSON -------------------------------------------------------------------

namespace {

const std::pair<DegradationKind, const char*> kKindNames[] = {
    {DegradationKind::None, "none"},          {DegradationKind::Sparsity, "sparsity"},
    {DegradationKind::PixelNoise, "pixel_noise"}, {DegradationKind::RegionNoise, "region_noise"},
    {DegradationKind::Downscale, "downscale"}, {DegradationKind::Partial, "partial"},
    {DegradationKind::FusionSim, "fusion_sim"}};

const char* criterion_name(RegionCriterion c) { return c == RegionCriterion::Sort ? "sort" : "even"; }
const char* mode_name(DownscaleMode m) { return m == DownscaleMode::SparseVoid ? "sparse_void" : "dense_interp"; }

}  // namespace

std::string to_string(DegradationKind kind) {
  for (const auto& [k, n] : kKindNames) {
    if (k == kind) return n;
  }
  return "none";
}

DegradationKind degradation_kind_from_string(const std::string& s) {
  for (const auto& [k, n] : kKindNames) {
    if (s == n) return k;
  }
  throw ConfigError("degradation: unknown kind \"" + s + "\"");
}

void to_json(json& j, const DegradationSpec& d) {
  j = {{"kind", to_string(d.kind)}};
  switch (d.kind) {
    case DegradationKind::None:
      break;
    case DegradationKind::Sparsity:
      j["ratio"] = d.ratio;
      j["keyframes"] = d.keyframes;
      break;
    case DegradationKind::PixelNoise:
      j["ratio"] = d.ratio;
      break;
    case DegradationKind::RegionNoise:
      j["ratio"] = d.ratio;
      j["target_class"] = d.target_class;
      j["criterion"] = criterion_name(d.criterion);
      break;
    case DegradationKind::Downscale:
      j["factor"] = d.factor;
      j["mode"] = mode_name(d.mode);
      break;
    case DegradationKind::Partial:
      j["budget"] = d.budget.single_click ? json("click") : json(d.budget.fraction);
      break;
    case DegradationKind::FusionSim:
      j["cnn"] = {{"region_class", d.cnn.region_class},
                  {"region_ratio", d.cnn.region_ratio},
                  {"pixel_ratio", d.cnn.pixel_ratio},
                  {"eta", d.cnn.eta}};
      break;
  }
}

void from_json(const json& j, DegradationSpec& d) {
  require_object(j, "degradation",
                 {"kind", "ratio", "keyframes", "target_class", "criterion", "factor", "mode", "budget", "cnn"});
  if (j.contains("kind")) d.kind = degradation_kind_from_string(j.at("kind").get<std::string>());
  read(j, "ratio", d.ratio);
  read(j, "keyframes", d.keyframes);
  read(j, "target_class", d.target_class);
  read(j, "factor", d.factor);
  if (j.contains("criterion")) {
    const auto s = j.at("criterion").get<std::string>();
    if (s != "sort" && s != "even") throw ConfigError("degradation: criterion must be \"sort\" or \"even\"");
    d.criterion = s == "sort" ? RegionCriterion::Sort : RegionCriterion::Even;
  }
  if (j.contains("mode")) {
    const auto s = j.at("mode").get<std::string>();
    if (s != "sparse_void" && s != "dense_interp") {
      throw ConfigError("degradation: mode must be \"sparse_void\" or \"dense_interp\"");
    }
    d.mode = s == "sparse_void" ? DownscaleMode::SparseVoid : DownscaleMode::DenseInterp;
  }
  if (j.contains("budget")) {
    const json& b = j.at("budget");
    if (b.is_string() && b.get<std::string>() == "click") {
      d.budget = PartialBudget::click();
    } else if (b.is_number()) {
      d.budget = PartialBudget::of(b.get<double>());
    } else {
      throw ConfigError("degradation: budget must be \"click\" or a pixel fraction");
    }
  }
  if (j.contains("cnn")) {
    const json& c = j.at("cnn");
    require_object(c, "degradation.cnn", {"region_class", "region_ratio", "pixel_ratio", "eta"});
    read(c, "region_class", d.cnn.region_class);
    read(c, "region_ratio", d.cnn.region_ratio);
    read(c, "pixel_ratio", d.cnn.pixel_ratio);
    read(c, "eta", d.cnn.eta);
  }
}

void to_json(json& j, const EvalSpec& e) {
  json targets = json::array();
  for (EvalTarget t : e.targets) targets.push_back(t == EvalTarget::Test ? "test" : "train");
  j = {{"targets", targets}, {"depth", e.depth}};
}

void from_json(const json& j, EvalSpec& e) {
  require_object(j, "eval", {"targets", "depth"});
  if (j.contains("targets")) {
    e.targets.clear();
    for (const auto& t : j.at("targets")) {
      const auto s = t.get<std::string>();
      if (s == "test") {
        e.targets.push_back(EvalTarget::Test);
      } else if (s == "train") {
        e.targets.push_back(EvalTarget::Train);
      } else {
        throw ConfigError("eval: unknown target \"" + s + "\" (use \"test\" or \"train\")");
      }
    }
  }
  read(j, "depth", e.depth);
}

void to_json(json& j, const ExperimentConfig& c) {
  j = {{"name", c.name},
       {"seed", c.seed},
       {"scene", c.scene},
       {"trajectory", c.trajectory},
       {"camera", {{"width", c.camera.width}, {"height", c.camera.height}, {"hfov_deg", c.camera.hfov_deg}}},
       {"split_stride", c.split_stride},
       {"test_frames", c.test_frames},
       {"field", c.field},
       {"train", c.train},
       {"degradation", c.degradation},
       {"eval", c.eval}};
  // Both are derived from the top-level seed.
  j["trajectory"].erase("seed");
  j["train"].erase("seed");
}

ExperimentConfig experiment_from_json(const json& j, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  try {
    require_object(j, "config",
                   {"name", "seed", "scene", "trajectory", "camera", "split_stride", "test_frames", "field", "train",
                    "degradation", "eval", "preset"});
    if (j.contains("preset")) c = ExperimentConfig::preset(j.at("preset").get<std::string>());
    read(j, "name", c.name);
    read(j, "seed", c.seed);
    // Nested objects update the current values rather than resetting them.
    if (j.contains("scene")) {
      json merged = c.scene;
      merged.update(j.at("scene"));
      c.scene = merged.get<SceneSpec>();
    }
    for (const char* section : {"trajectory", "train"}) {
      if (j.contains(section) && j.at(section).is_object() && j.at(section).contains("seed")) {
        throw ConfigError(std::string("config: ") + section + ".seed is derived from the top-level seed; remove it");
      }
    }
    if (j.contains("trajectory")) {
      json merged = c.trajectory;
      merged.update(j.at("trajectory"));
      c.trajectory = merged.get<TrajectorySpec>();
    }
    if (j.contains("camera")) {
      const json& cam = j.at("camera");
      require_object(cam, "camera", {"width", "height", "hfov_deg"});
      read(cam, "width", c.camera.width);
      read(cam, "height", c.camera.height);
      read(cam, "hfov_deg", c.camera.hfov_deg);
    }
    read(j, "split_stride", c.split_stride);
    read(j, "test_frames", c.test_frames);
    if (j.contains("field")) {
      json merged = c.field;
      merged.update(j.at("field"), true);
      c.field = merged.get<FieldConfig>();
    }
    if (j.contains("train")) {
      json merged = c.train;
      merged.update(j.at("train"), true);
      c.train = merged.get<TrainConfig>();
    }
    if (j.contains("degradation")) {
      DegradationSpec d;
      from_json(j.at("degradation"), d);
      c.degradation = d;
    }
    if (j.contains("eval")) {
      json merged = c.eval;
      merged.update(j.at("eval"));
      c.eval = merged.get<EvalSpec>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, const ExperimentConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j, base);
}

void save_experiment_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << json(config).dump(2) << '\n';
}

// --- pipeline -----------------------------------------------------------------

ExperimentSplit experiment_split(const ExperimentConfig& config, std::size_t num_frames) {
  const Split s = split(num_frames, config.split_stride);
  ExperimentSplit out;
  out.train = s.train;
  out.test = config.test_frames > 0 ? even_subset(s.test, std::size_t(config.test_frames)) : s.test;
  return out;
}

SceneModel experiment_scene(const ExperimentConfig& config) {
  return generate_scene(config.scene, Rng(config.seed).derive("scene").next_u64());
}

Dataset generate_dataset(const ExperimentConfig& config) {
  config.validate();
  TrajectorySpec ts = config.trajectory;
  ts.seed = Rng(config.seed).derive("trajectory").next_u64();
  return render_sequence(experiment_scene(config), config.camera.camera(), make_trajectory(ts),
                         config.train.render.bounds, config.train.render.threads);
}

DegradedData degrade(const Dataset& clean, const ExperimentConfig& config) {
  config.degradation.validate();
  const DegradationSpec& spec = config.degradation;
  const ExperimentSplit sp = experiment_split(config, clean.frames.size());
  const Rng rng = Rng(config.seed).derive("degrade");
  DegradedData out;
  out.dataset = clean;
  Dataset& ds = out.dataset;
  const int c = clean.num_classes;

  switch (spec.kind) {
    case DegradationKind::None:
      break;
    case DegradationKind::Sparsity: {
      const SupervisionMask mask =
          spec.keyframes.empty() ? select_keyframes(sp.train, spec.ratio) : select_keyframes(sp.train, spec.keyframes);
      for (int f : sp.train) {
        if (!mask.is_labelled(f)) std::fill(ds.frames[f].labels.data.begin(), ds.frames[f].labels.data.end(), kVoidLabel);
      }
      break;
    }
    case DegradationKind::PixelNoise:
      for (int f : sp.train) {
        Rng r = rng.derive(std::uint64_t(f));
        ds.frames[f].labels = corrupt_pixels(clean.frames[f].labels, spec.ratio, c, r);
      }
      break;
    case DegradationKind::RegionNoise: {
      if (!clean.has_instances()) throw DataError("region noise needs instance maps in the dataset");
      std::vector<LabelImage> labels, instances;
      for (int f : sp.train) {
        labels.push_back(clean.frames[f].labels);
        instances.push_back(*clean.frames[f].instances);
      }
      Rng r = rng.derive("region");
      const auto noisy = corrupt_regions(labels, instances, spec.target_class, spec.ratio, spec.criterion, c, r);
      for (std::size_t i = 0; i < sp.train.size(); ++i) ds.frames[sp.train[i]].labels = noisy[i];
      break;
    }
    case DegradationKind::Downscale:
      for (int f : sp.train) ds.frames[f].labels = downscale_labels(clean.frames[f].labels, spec.factor, spec.mode);
      break;
    case DegradationKind::Partial:
      for (int f : sp.train) {
        Rng r = rng.derive(std::uint64_t(f));
        ds.frames[f].labels = partial_labels(clean.frames[f].labels, spec.budget, r);
      }
      break;
    case DegradationKind::FusionSim: {
      if (!clean.has_instances()) throw DataError("fusion simulation needs instance maps in the dataset");
      Rng r = rng.derive("cnn");
      out.predictions = simulate_cnn_predictions(clean, spec.cnn, r);
      for (int f : sp.train) ds.frames[f].labels = argmax_labels(out.predictions[f]);
      break;
    }
  }
  return out;
}

TrainResult train_experiment(const Dataset& data, const ExperimentConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (data.num_classes != config.field.num_classes) {
    throw ConfigError("dataset has " + std::to_string(data.num_classes) + " classes but the field expects " +
                      std::to_string(config.field.num_classes));
  }
  const ExperimentSplit sp = experiment_split(config, data.frames.size());
  const SupervisionMask mask = select_keyframes(sp.train, 0.0);
  const TrainingSet set = make_training_set(data, mask, config.train.render.bounds);
  TrainConfig tc = config.train;
  tc.seed = Rng(config.seed).derive("train").next_u64();
  return train(set, config.field, tc, hooks);
}

std::vector<RenderedImage> render_frames(const FieldEvaluator<float>& field, const Dataset& dataset,
                                         std::span<const int> frames, const RenderConfig& config) {
  std::vector<RenderedImage> out;
  out.reserve(frames.size());
  for (int f : frames) {
    if (f < 0 || std::size_t(f) >= dataset.frames.size()) throw ConfigError("render: frame index out of range");
    out.push_back(render_image(field, dataset.camera, dataset.frames[f].pose, config));
  }
  return out;
}

MetricsReport evaluate_frames(const std::string& name, std::span<const RenderedImage> rendered,
                              const Dataset& reference, std::span<const int> frames, bool depth) {
  if (rendered.size() != frames.size()) throw DomainError("evaluate_frames: one rendering per frame expected");
  std::vector<LabelImage> pred, gt;
  std::vector<RgbImage> rgb, gt_rgb;
  std::vector<DepthImage> d, gt_d;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& ref = reference.frames.at(std::size_t(frames[i]));
    pred.push_back(rendered[i].labels);
    gt.push_back(ref.labels);
    rgb.push_back(rendered[i].rgb);
    gt_rgb.push_back(ref.rgb);
    if (depth && ref.depth) {
      d.push_back(rendered[i].depth);
      gt_d.push_back(*ref.depth);
    }
  }
  MetricsReport r;
  r.name = name;
  r.segmentation = segmentation_metrics(pred, gt, reference.num_classes);
  r.psnr = psnr(rgb, gt_rgb);
  if (depth && !d.empty() && d.size() == frames.size()) r.depth = depth_metrics(d, gt_d);
  return r;
}

MetricsReport evaluate_labels(const std::string& name, std::span<const LabelImage> labels, const Dataset& reference,
                              std::span<const int> frames) {
  if (labels.size() != frames.size()) throw DomainError("evaluate_labels: one label map per frame expected");
  std::vector<LabelImage> gt;
  for (int f : frames) gt.push_back(reference.frames.at(std::size_t(f)).labels);
  MetricsReport r;
  r.name = name;
  r.segmentation = segmentation_metrics(labels, gt, reference.num_classes);
  return r;
}

std::vector<MetricsReport> fusion_comparison(const Dataset& clean, const DegradedData& degraded,
                                             const ExperimentConfig& config, const FieldEvaluator<float>* field,
                                             DepthSource depth_source) {
  if (degraded.predictions.size() != clean.frames.size()) {
    throw ConfigError("fusion comparison needs the fusion_sim degradation");
  }
  if (depth_source == DepthSource::Learned && field == nullptr) {
    throw ConfigError("fusion with learned depth needs a trained checkpoint");
  }
  const ExperimentSplit sp = experiment_split(config, clean.frames.size());
  const int threads = config.train.render.threads;

  std::vector<RenderedImage> rendered;
  if (field) rendered = render_frames(*field, clean, sp.train, config.train.render);
  std::vector<DepthImage> learned;
  if (depth_source == DepthSource::Learned) {
    learned.resize(clean.frames.size());
    for (std::size_t i = 0; i < sp.train.size(); ++i) learned[std::size_t(sp.train[i])] = rendered[i].depth;
  }

  std::vector<MetricsReport> rows;
  std::vector<LabelImage> mono;
  for (int f : sp.train) mono.push_back(argmax_labels(degraded.predictions[std::size_t(f)]));
  rows.push_back(evaluate_labels("monocular", mono, clean, sp.train));
  for (FusionMethod method : {FusionMethod::Average, FusionMethod::Bayesian}) {
    FusionSettings settings;
    settings.method = method;
    settings.depth_source = depth_source;
    settings.threads = threads;
    std::vector<LabelImage> fused;
    for (int f : sp.train) fused.push_back(fuse_to_frame(clean, degraded.predictions, f, sp.train, settings, learned).labels);
    rows.push_back(evaluate_labels(method == FusionMethod::Average ? "average" : "bayesian", fused, clean, sp.train));
  }
  if (field) {
    std::vector<LabelImage> nerf;
    for (const auto& r : rendered) nerf.push_back(r.labels);
    rows.push_back(evaluate_labels("nerf", nerf, clean, sp.train));
  }
  return rows;
}

SemanticMesh extract_semantic_mesh(const FieldEvaluator<float>& field, const ExperimentConfig& config,
                                   const MeshSettings& settings) {
  if (settings.resolution < 2) throw ConfigError("mesh: resolution must be >= 2");
  const int threads = config.train.render.threads;
  const DensityGrid grid =
      density_grid(field, config.scene.world_min, config.scene.world_max, settings.resolution, threads);
  const Mesh mesh = marching_cubes(grid, settings.iso);
  TextureSettings tex;
  tex.render = config.train.render;
  return semantic_texture(field, mesh, grid.spacing().minCoeff(), tex);
}

}  // namespace snerf
