#include <doctest.h>

#include <algorithm>

#include "snerf/errors.hpp"
#include "snerf/experiment.hpp"

using namespace snerf;
using nlohmann::json;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c = ExperimentConfig::preset("desk-quick");
  c.camera = {24, 18, 70.0};
  c.trajectory.num_poses = 40;
  c.train.render.threads = 1;
  return c;
}

std::vector<DegradationSpec> every_degradation() {
  std::vector<DegradationSpec> out(7);
  out[1].kind = DegradationKind::Sparsity;
  out[1].ratio = 0.9;
  out[2].kind = DegradationKind::Sparsity;
  out[2].keyframes = {0, 20};
  out[3].kind = DegradationKind::PixelNoise;
  out[3].ratio = 0.5;
  out[4].kind = DegradationKind::RegionNoise;
  out[4].ratio = 0.3;
  out[4].criterion = RegionCriterion::Even;
  out[5].kind = DegradationKind::Downscale;
  out[5].factor = 8;
  out[5].mode = DownscaleMode::DenseInterp;
  out[6].kind = DegradationKind::Partial;
  out[6].budget = PartialBudget::of(0.05);
  DegradationSpec fusion;
  fusion.kind = DegradationKind::FusionSim;
  fusion.cnn.eta = 0.2;
  out.push_back(fusion);
  DegradationSpec click;
  click.kind = DegradationKind::Partial;
  out.push_back(click);
  return out;
}

}  // namespace

TEST_CASE("config round trip: parse(serialize(c)) == c") {
  for (const auto& name : ExperimentConfig::preset_names()) {
    const ExperimentConfig c = ExperimentConfig::preset(name);
    CHECK(experiment_from_json(json(c)) == c);
  }
  for (const auto& d : every_degradation()) {
    ExperimentConfig c = small_config();
    c.seed = 1234567890123ULL;
    c.degradation = d;
    c.eval.targets = {EvalTarget::Train, EvalTarget::Test};
    c.scene.single_class = 3;
    const ExperimentConfig back = experiment_from_json(json::parse(json(c).dump()));
    CHECK(back == c);
    CHECK(json(back).dump() == json(c).dump());
  }
}

TEST_CASE("config parsing is strict and layered over the preset") {
  const ExperimentConfig quick = ExperimentConfig::preset("desk-quick");
  const ExperimentConfig c = experiment_from_json(json::parse(R"({"train": {"render": {"num_fine": 5}}})"), quick);
  CHECK(c.train.render.num_fine == 5);
  CHECK(c.train.render.num_coarse == quick.train.render.num_coarse);
  CHECK(c.train.iterations == quick.train.iterations);

  const ExperimentConfig p = experiment_from_json(json::parse(R"({"preset": "paper-scale"})"));
  CHECK(p.field.trunk_width == 256);

  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"trian": {}})")), ConfigError);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"train": {"learning_rat": 1}})")), ConfigError);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"train": {"seed": 3}})")), ConfigError);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"degradation": {"kind": "blur"}})")), ConfigError);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"degradation": {"kind": "partial", "budget": "two"}})")),
                  ConfigError);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"seed": "seven"})")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::preset("huge"), ConfigError);

  ExperimentConfig bad = small_config();
  bad.field.num_classes = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_config();
  bad.degradation.kind = DegradationKind::Sparsity;
  bad.degradation.ratio = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("split uses an even subset of the midpoints as test frames") {
  ExperimentConfig c = small_config();
  const ExperimentSplit sp = experiment_split(c, 200);
  CHECK(sp.train.size() == 40);
  CHECK(sp.test.size() == 8);
  CHECK(sp.test.front() == 2);
  CHECK(sp.test.back() == 192);
  for (int t : sp.test) CHECK(t % 5 == 2);
  c.test_frames = 0;
  CHECK(experiment_split(c, 200).test.size() == 39);
}

TEST_CASE("degradations touch training labels only and are seeded") {
  ExperimentConfig c = small_config();
  const Dataset clean = generate_dataset(c);
  CHECK(clean.frames.size() == 40);
  const ExperimentSplit sp = experiment_split(c, clean.frames.size());
  for (const auto& d : every_degradation()) {
    c.degradation = d;
    if (d.kind == DegradationKind::Sparsity && !d.keyframes.empty()) c.degradation.keyframes = {0, 20};
    const DegradedData out = degrade(clean, c);
    const DegradedData again = degrade(clean, c);
    INFO("degradation " << to_string(d.kind));
    for (std::size_t f = 0; f < clean.frames.size(); ++f) {
      const bool is_train = std::find(sp.train.begin(), sp.train.end(), int(f)) != sp.train.end();
      CHECK(out.dataset.frames[f].rgb == clean.frames[f].rgb);
      CHECK(out.dataset.frames[f].labels == again.dataset.frames[f].labels);
      if (!is_train) CHECK(out.dataset.frames[f].labels == clean.frames[f].labels);
    }
    std::size_t changed = 0;
    for (int f : sp.train) changed += out.dataset.frames[f].labels != clean.frames[f].labels;
    if (d.kind == DegradationKind::None) {
      CHECK(changed == 0);
    } else {
      CHECK(changed > 0);
    }
    if (d.kind == DegradationKind::FusionSim) CHECK(out.predictions.size() == clean.frames.size());
  }

  // Sparsity: unlabelled training frames become entirely void.
  c.degradation = {};
  c.degradation.kind = DegradationKind::Sparsity;
  c.degradation.keyframes = {0, 20};
  const DegradedData two = degrade(clean, c);
  for (int f : sp.train) {
    const auto& l = two.dataset.frames[f].labels.data;
    const bool all_void = std::all_of(l.begin(), l.end(), [](std::uint8_t v) { return v == kVoidLabel; });
    CHECK(all_void == (f != 0 && f != 20));
  }
}

TEST_CASE("evaluation helpers score ground truth perfectly") {
  const ExperimentConfig c = small_config();
  const Dataset clean = generate_dataset(c);
  const ExperimentSplit sp = experiment_split(c, clean.frames.size());
  std::vector<LabelImage> labels;
  std::vector<RenderedImage> rendered;
  for (int f : sp.test) {
    labels.push_back(clean.frames[f].labels);
    RenderedImage r;
    r.rgb = clean.frames[f].rgb;
    r.labels = clean.frames[f].labels;
    r.depth = *clean.frames[f].depth;
    rendered.push_back(r);
  }
  const MetricsReport a = evaluate_labels("gt", labels, clean, sp.test);
  CHECK(a.segmentation->miou == 1.0);
  CHECK_FALSE(a.psnr);
  const MetricsReport b = evaluate_frames("gt", rendered, clean, sp.test, true);
  CHECK(b.segmentation->total_acc == 1.0);
  CHECK(*b.psnr == kPsnrCap);
  CHECK(b.depth->abs_rel == 0.0);
}
