#include "snerf/fusion.hpp"

#include <cmath>

#include "snerf/errors.hpp"
#include "snerf/labelops.hpp"
#include "snerf/parallel.hpp"

namespace snerf {

Eigen::VectorXd bayesian_fuse(std::span<const Eigen::VectorXd> distributions) {
  if (distributions.empty()) throw DomainError("bayesian_fuse: nothing to fuse");
  Eigen::VectorXd out = Eigen::VectorXd::Ones(distributions.front().size());
  for (const auto& p : distributions) {
    if (p.size() != out.size()) throw DomainError("bayesian_fuse: distributions differ in length");
    out = out.cwiseProduct(p.cwiseMax(kFusionFloor));
    // Renormalise as we go so long products do not underflow.
    out /= out.sum();
  }
  return out;
}

Eigen::VectorXd average_fuse(std::span<const Eigen::VectorXd> distributions) {
  if (distributions.empty()) throw DomainError("average_fuse: nothing to fuse");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(distributions.front().size());
  for (const auto& p : distributions) {
    if (p.size() != out.size()) throw DomainError("average_fuse: distributions differ in length");
    out += p;
  }
  return out / double(distributions.size());
}

ProbabilityMap soften_labels(const LabelImage& labels, int num_classes, double eta) {
  if (num_classes < 2) throw ConfigError("soften_labels: need at least 2 classes");
  if (!(eta >= 0.0 && eta < 1.0)) throw ConfigError("soften_labels: eta must lie in [0, 1)");
  ProbabilityMap out(labels.width, labels.height, num_classes);
  const float off = float(eta / (num_classes - 1));
  for (std::size_t p = 0; p < labels.num_pixels(); ++p) {
    float* px = &out.data[p * num_classes];
    const int l = labels[p];
    if (l == kVoidLabel) {
      std::fill(px, px + num_classes, 1.0f / float(num_classes));
      continue;
    }
    if (l >= num_classes) throw DomainError("soften_labels: label out of range");
    std::fill(px, px + num_classes, off);
    px[l] = float(1.0 - eta);
  }
  return out;
}

LabelImage argmax_labels(const ProbabilityMap& probs) {
  LabelImage out(probs.width, probs.height);
  for (std::size_t p = 0; p < probs.num_pixels(); ++p) {
    const float* px = &probs.data[p * probs.channels];
    int best = 0;
    for (int c = 1; c < probs.channels; ++c) {
      if (px[c] > px[best]) best = c;
    }
    out[p] = std::uint8_t(best);
  }
  return out;
}

FusedFrame fuse_to_frame(const Dataset& dataset, std::span<const ProbabilityMap> probs, int target,
                         std::span<const int> window, const FusionSettings& settings,
                         std::span<const DepthImage> learned_depth) {
  const int n = int(dataset.frames.size());
  if (int(probs.size()) != n) throw ConfigError("fuse_to_frame: need one probability map per frame");
  if (target < 0 || target >= n) throw ConfigError("fuse_to_frame: target frame out of range");
  const DepthImage* depth_of_target = nullptr;
  auto depth = [&](int f) -> const DepthImage& {
    if (settings.depth_source == DepthSource::GroundTruth) return *dataset.frames[f].depth;
    return learned_depth[f];
  };
  if (settings.depth_source == DepthSource::GroundTruth) {
    if (!dataset.has_depth()) throw ConfigError("fuse_to_frame: ground-truth depth requested but the dataset has none");
  } else if (int(learned_depth.size()) != n) {
    throw ConfigError("fuse_to_frame: learned depth requested but not supplied for every frame");
  }
  depth_of_target = &depth(target);
  for (int f : window) {
    if (f < 0 || f >= n) throw ConfigError("fuse_to_frame: window frame out of range");
  }

  const Camera& cam = dataset.camera;
  const int c = probs[target].channels;
  FusedFrame out{LabelImage(cam.width, cam.height), ProbabilityMap(cam.width, cam.height, c)};
  const Pose& src = dataset.frames[target].pose;
  parallel_for(std::size_t(cam.height), resolve_threads(settings.threads), [&](std::size_t row) {
    std::vector<Eigen::VectorXd> gathered;
    auto dist_at = [&](int f, int col, int r) {
      return Eigen::Map<const Eigen::VectorXf>(&probs[f].at(col, r, 0), c).cast<double>().eval();
    };
    for (int col = 0; col < cam.width; ++col) {
      gathered.clear();
      gathered.push_back(dist_at(target, col, int(row)));
      const double d = depth_of_target->at(col, int(row));
      for (int f : window) {
        if (f == target || !(d > 0.0)) continue;
        const auto hit = reproject({col, int(row)}, d, src, dataset.frames[f].pose, cam);
        if (!hit) continue;
        const int u = int(std::lround(hit->pixel.x())), v = int(std::lround(hit->pixel.y()));
        if (u < 0 || v < 0 || u >= cam.width || v >= cam.height) continue;
        if (std::abs(hit->depth - double(depth(f).at(u, v))) >= settings.depth_tolerance) continue;
        gathered.push_back(dist_at(f, u, v));
      }
      const Eigen::VectorXd fused =
          settings.method == FusionMethod::Bayesian ? bayesian_fuse(gathered) : average_fuse(gathered);
      for (int k = 0; k < c; ++k) out.probabilities.at(col, int(row), k) = float(fused(k));
      out.labels.at(col, int(row)) = std::uint8_t(argmax_label(fused));
    }
  });
  return out;
}

std::vector<ProbabilityMap> simulate_cnn_predictions(const Dataset& dataset, const CnnSimulation& sim, Rng& rng) {
  if (!dataset.has_instances()) throw ConfigError("CNN simulation needs instance maps");
  const auto labels = dataset.label_maps();
  std::vector<LabelImage> instances;
  for (const auto& f : dataset.frames) instances.push_back(*f.instances);
  Rng region_rng = rng.derive("regions");
  auto noisy = corrupt_regions(labels, instances, sim.region_class, sim.region_ratio, RegionCriterion::Even,
                               dataset.num_classes, region_rng);
  std::vector<ProbabilityMap> out;
  for (std::size_t f = 0; f < noisy.size(); ++f) {
    Rng pixel_rng = rng.derive("pixels").derive(f);
    out.push_back(soften_labels(corrupt_pixels(noisy[f], sim.pixel_ratio, dataset.num_classes, pixel_rng),
                                dataset.num_classes, sim.eta));
  }
  return out;
}

std::vector<LabelImage> nerf_fusion_render(const FieldEvaluator<float>& field, const Dataset& dataset,
                                           std::span<const int> frames, const RenderConfig& config) {
  std::vector<LabelImage> out;
  for (int f : frames) {
    if (f < 0 || std::size_t(f) >= dataset.frames.size()) throw ConfigError("nerf_fusion_render: frame out of range");
    out.push_back(render_image(field, dataset.camera, dataset.frames[f].pose, config).labels);
  }
  return out;
}

}  // namespace snerf
