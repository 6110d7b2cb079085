// Command line driver: gen, degrade, train, render, eval, fuse, mesh.
//
// Every subcommand reads one experiment config (a preset, optionally
// overridden by a JSON file and --seed) and works inside the --out
// directory:
//
//   OUT/config.json     resolved config, written by gen
//   OUT/dataset/        clean synthetic dataset
//   OUT/degraded/       dataset with degraded training labels
//   OUT/checkpoint.bin  trained field, OUT/loss.csv its loss trace
//   OUT/render/         rendered frames in the dataset layout, plus entropy maps
//   OUT/metrics.csv     evaluation table (also .json)
//   OUT/fusion.csv      fusion comparison table (also .json)
//   OUT/mesh.ply        semantic mesh
//
// Exit codes: 0 success, 1 internal error, 2 config error, 3 data error,
// 4 numeric divergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "snerf/errors.hpp"
#include "snerf/experiment.hpp"
#include "snerf/image.hpp"

namespace fs = std::filesystem;
using namespace snerf;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string preset = "desk-scale";
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool deterministic = false;
  bool overwrite = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (JSON); overrides the preset");
  sub->add_option("--preset", c.preset, "base preset: desk-scale, desk-quick or paper-scale");
  sub->add_option("--seed", c.seed, "overrides the config seed");
  sub->add_option("--out", c.out, "output directory");
  sub->add_flag("--deterministic", c.deterministic, "single-threaded, bit-reproducible run");
  sub->add_flag("--overwrite", c.overwrite, "replace existing outputs");
}

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = ExperimentConfig::preset(c.preset);
  if (!c.config.empty()) cfg = load_experiment_config(c.config, cfg);
  if (c.seed) cfg.seed = *c.seed;
  const int threads = c.deterministic ? 1 : 0;
  cfg.train.threads = threads;
  cfg.train.render.threads = threads;
  cfg.validate();
  return cfg;
}

/// Refuses to replace `path` unless --overwrite, in which case it is removed.
void claim_output(const fs::path& path, bool overwrite) {
  if (!fs::exists(path)) return;
  if (!overwrite) throw ConfigError(path.string() + " already exists; pass --overwrite to replace it");
  fs::remove_all(path);
}

void require_input(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw MissingFileError(path.string() + " not found (" + hint + ")");
}

fs::path default_training_data(const fs::path& out) {
  return fs::exists(out / "degraded") ? out / "degraded" : out / "dataset";
}

std::vector<int> pick_frames(const std::string& which, const ExperimentConfig& cfg, std::size_t n) {
  const ExperimentSplit sp = experiment_split(cfg, n);
  if (which == "test") return sp.test;
  if (which == "train") return sp.train;
  if (which == "all") {
    std::vector<int> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = int(i);
    return all;
  }
  throw ConfigError("--frames must be test, train or all");
}

void write_reports(const fs::path& out, const std::string& stem, const std::vector<MetricsReport>& rows, bool overwrite) {
  claim_output(out / (stem + ".csv"), overwrite);
  claim_output(out / (stem + ".json"), overwrite);
  write_metrics_csv(out / (stem + ".csv"), rows);
  write_metrics_json(out / (stem + ".json"), rows);
  std::fputs(metrics_csv(rows).c_str(), stdout);
}

// ---- subcommands --------------------------------------------------------------

void cmd_gen(const Common& c) {
  const ExperimentConfig cfg = resolve_config(c);
  const fs::path out(c.out);
  claim_output(out / "dataset", c.overwrite);
  claim_output(out / "config.json", c.overwrite);
  fs::create_directories(out);
  const Dataset ds = generate_dataset(cfg);
  save_dataset(ds, out / "dataset");
  save_experiment_config(out / "config.json", cfg);
  std::fprintf(stderr, "wrote %zu frames to %s\n", ds.frames.size(), (out / "dataset").c_str());
}

void cmd_degrade(const Common& c, const std::string& data) {
  const ExperimentConfig cfg = resolve_config(c);
  const fs::path out(c.out);
  const fs::path src = data.empty() ? out / "dataset" : fs::path(data);
  require_input(src, "run gen first or pass --data");
  claim_output(out / "degraded", c.overwrite);
  const Dataset clean = load_dataset(src);
  const DegradedData d = degrade(clean, cfg);
  save_dataset(d.dataset, out / "degraded");
  std::fprintf(stderr, "applied %s degradation, wrote %s\n", to_string(cfg.degradation.kind).c_str(),
               (out / "degraded").c_str());
}

void cmd_train(const Common& c, const std::string& data) {
  const ExperimentConfig cfg = resolve_config(c);
  const fs::path out(c.out);
  const fs::path src = data.empty() ? default_training_data(out) : fs::path(data);
  require_input(src, "run gen (and optionally degrade) first or pass --data");
  claim_output(out / "checkpoint.bin", c.overwrite);
  claim_output(out / "loss.csv", c.overwrite);
  fs::create_directories(out);
  const Dataset ds = load_dataset(src);
  TrainHooks hooks;
  hooks.checkpoint_path = out / "checkpoint.bin";
  hooks.on_log = [&](const LossRecord& r) {
    std::fprintf(stderr, "iter %6d/%d  L_p %.5f  L_s %.5f  total %.5f\n", r.iteration, cfg.train.iterations,
                 r.loss.photometric, r.loss.semantic, r.loss.total);
  };
  const TrainResult result = train_experiment(ds, cfg, hooks);
  write_loss_trace(out / "loss.csv", result.trace);
}

void cmd_render(const Common& c, const std::string& checkpoint, const std::string& data, const std::string& frames) {
  const ExperimentConfig cfg = resolve_config(c);
  const fs::path out(c.out);
  const fs::path ck = checkpoint.empty() ? out / "checkpoint.bin" : fs::path(checkpoint);
  const fs::path src = data.empty() ? out / "dataset" : fs::path(data);
  require_input(ck, "run train first or pass --checkpoint");
  require_input(src, "the dataset supplies the camera and poses; pass --data");
  claim_output(out / "render", c.overwrite);
  const Checkpoint model = load_checkpoint(ck);
  const Dataset ds = load_dataset(src);
  std::string which = frames;
  if (which.empty()) which = cfg.eval.targets.empty() || cfg.eval.targets.front() == EvalTarget::Test ? "test" : "train";
  const std::vector<int> ids = pick_frames(which, cfg, ds.frames.size());
  const auto rendered = render_frames(model.field, ds, ids, cfg.train.render);

  Dataset result;
  result.camera = ds.camera;
  result.num_classes = ds.num_classes;
  result.class_names = ds.class_names;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Frame f;
    f.rgb = rendered[i].rgb;
    f.labels = rendered[i].labels;
    f.depth = rendered[i].depth;
    f.pose = ds.frames[std::size_t(ids[i])].pose;
    result.frames.push_back(std::move(f));
  }
  save_dataset(result, out / "render");
  fs::create_directories(out / "render" / "entropy");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.pfm", i);
    write_pfm(out / "render" / "entropy" / name, rendered[i].entropy);
  }
  std::ofstream(out / "render" / "source_frames.json") << json(ids).dump() << '\n';
  std::fprintf(stderr, "rendered %zu %s frames to %s\n", ids.size(), which.c_str(), (out / "render").c_str());
}

void cmd_eval(const Common& c, const std::string& rendered_dir, const std::string& reference_dir,
              const std::string& name) {
  const ExperimentConfig cfg = resolve_config(c);
  const fs::path out(c.out);
  const fs::path rdir = rendered_dir.empty() ? out / "render" : fs::path(rendered_dir);
  const fs::path refdir = reference_dir.empty() ? out / "dataset" : fs::path(reference_dir);
  require_input(rdir, "run render first or pass --rendered");
  require_input(refdir, "pass --reference");
  const Dataset pred = load_dataset(rdir);
  const Dataset ref = load_dataset(refdir);
  if (pred.num_classes != ref.num_classes) throw ValidationError("rendered and reference class counts differ");

  std::vector<int> ids;
  if (fs::exists(rdir / "source_frames.json")) {
    std::ifstream in(rdir / "source_frames.json");
    try {
      ids = json::parse(in).get<std::vector<int>>();
    } catch (const json::exception& e) {
      throw FormatError((rdir / "source_frames.json").string() + ": " + e.what());
    }
  } else {
    for (std::size_t i = 0; i < pred.frames.size(); ++i) ids.push_back(int(i));
  }
  if (ids.size() != pred.frames.size()) throw ValidationError("source_frames.json does not match the rendered frames");
  for (int f : ids) {
    if (f < 0 || std::size_t(f) >= ref.frames.size()) {
      throw ValidationError("rendered frame maps to reference frame " + std::to_string(f) + ", which does not exist");
    }
  }
  std::vector<RenderedImage> images;
  for (const Frame& f : pred.frames) {
    RenderedImage r;
    r.rgb = f.rgb;
    r.labels = f.labels;
    if (f.depth) r.depth = *f.depth;
    images.push_back(std::move(r));
  }
  const bool depth = cfg.eval.depth && pred.has_depth() && ref.has_depth();
  fs::create_directories(out);
  write_reports(out, "metrics", {evaluate_frames(name, images, ref, ids, depth)}, c.overwrite);
}

void cmd_fuse(const Common& c, const std::string& checkpoint, const std::string& data, const std::string& depth) {
  ExperimentConfig cfg = resolve_config(c);
  if (cfg.degradation.kind != DegradationKind::FusionSim) {
    throw ConfigError("fuse needs a config whose degradation kind is fusion_sim");
  }
  const fs::path out(c.out);
  const fs::path src = data.empty() ? out / "dataset" : fs::path(data);
  require_input(src, "run gen first or pass --data");
  if (depth != "gt" && depth != "learned") throw ConfigError("--depth must be gt or learned");
  std::optional<Checkpoint> model;
  const fs::path ck = checkpoint.empty() ? out / "checkpoint.bin" : fs::path(checkpoint);
  if (!checkpoint.empty() || fs::exists(ck)) {
    require_input(ck, "pass a trained --checkpoint");
    model = load_checkpoint(ck);
  }
  const Dataset clean = load_dataset(src);
  const DegradedData degraded = degrade(clean, cfg);
  const auto rows = fusion_comparison(clean, degraded, cfg, model ? &model->field : nullptr,
                                      depth == "gt" ? DepthSource::GroundTruth : DepthSource::Learned);
  fs::create_directories(out);
  write_reports(out, "fusion", rows, c.overwrite);
}

void cmd_mesh(const Common& c, const std::string& checkpoint, int resolution, double iso) {
  const ExperimentConfig cfg = resolve_config(c);
  const fs::path out(c.out);
  const fs::path ck = checkpoint.empty() ? out / "checkpoint.bin" : fs::path(checkpoint);
  require_input(ck, "run train first or pass --checkpoint");
  claim_output(out / "mesh.ply", c.overwrite);
  const Checkpoint model = load_checkpoint(ck);
  MeshSettings ms;
  ms.resolution = resolution;
  ms.iso = iso;
  const SemanticMesh mesh = extract_semantic_mesh(model.field, cfg, ms);
  fs::create_directories(out);
  write_ply(out / "mesh.ply", mesh);
  std::fprintf(stderr, "mesh: %zu vertices, %zu triangles -> %s\n", mesh.mesh.vertices.size(),
               mesh.mesh.triangles.size(), (out / "mesh.ply").c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic radiance field experiments on procedural desk scenes"};
  app.require_subcommand(1);
  Common common;
  std::string data, checkpoint, frames, rendered, reference, name = "eval", depth = "gt";
  int resolution = 64;
  double iso = 5.0;

  auto* gen = app.add_subcommand("gen", "render a synthetic dataset from the config");
  add_common(gen, common);

  auto* deg = app.add_subcommand("degrade", "apply the config's label degradation to the training frames");
  add_common(deg, common);
  deg->add_option("--data", data, "input dataset (default OUT/dataset)");

  auto* trn = app.add_subcommand("train", "fit the semantic radiance field");
  add_common(trn, common);
  trn->add_option("--data", data, "training dataset (default OUT/degraded, else OUT/dataset)");

  auto* ren = app.add_subcommand("render", "render RGB, labels, depth and entropy at dataset poses");
  add_common(ren, common);
  ren->add_option("--checkpoint", checkpoint, "trained field (default OUT/checkpoint.bin)");
  ren->add_option("--data", data, "dataset providing camera and poses (default OUT/dataset)");
  ren->add_option("--frames", frames, "test, train or all (default: the config's first eval target)")->check(CLI::IsMember({"test", "train", "all"}));

  auto* evl = app.add_subcommand("eval", "score rendered (or any) labels against a reference dataset");
  add_common(evl, common);
  evl->add_option("--rendered", rendered, "predictions in the dataset layout (default OUT/render)");
  evl->add_option("--reference", reference, "reference dataset (default OUT/dataset)");
  evl->add_option("--name", name, "row name in the metrics table");

  auto* fus = app.add_subcommand("fuse", "compare monocular, average, Bayesian and training-based label fusion");
  add_common(fus, common);
  fus->add_option("--checkpoint", checkpoint, "field trained on the simulated predictions (default OUT/checkpoint.bin if present)");
  fus->add_option("--data", data, "clean dataset (default OUT/dataset)");
  fus->add_option("--depth", depth, "depth used for reprojection: gt or learned")->check(CLI::IsMember({"gt", "learned"}));

  auto* msh = app.add_subcommand("mesh", "extract a semantically labelled mesh");
  add_common(msh, common);
  msh->add_option("--checkpoint", checkpoint, "trained field (default OUT/checkpoint.bin)");
  msh->add_option("--resolution", resolution, "lattice nodes per axis");
  msh->add_option("--iso", iso, "density threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) cmd_gen(common);
    if (*deg) cmd_degrade(common, data);
    if (*trn) cmd_train(common, data);
    if (*ren) cmd_render(common, checkpoint, data, frames);
    if (*evl) cmd_eval(common, rendered, reference, name);
    if (*fus) cmd_fuse(common, checkpoint, data, depth);
    if (*msh) cmd_mesh(common, checkpoint, resolution, iso);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "numeric divergence: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
