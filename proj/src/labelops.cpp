#include "snerf/labelops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "snerf/dataset.hpp"
#include "snerf/errors.hpp"

namespace snerf {
namespace {

void check_ratio(double r, const char* what) {
  if (!(r >= 0.0 && r <= 1.0)) throw ConfigError(std::string(what) + ": ratio must lie in [0, 1]");
}

}  // namespace

LabelImage corrupt_pixels(const LabelImage& labels, double noise_ratio, int num_classes, Rng& rng) {
  check_ratio(noise_ratio, "corrupt_pixels");
  if (num_classes < 1 || num_classes > 255) throw ConfigError("corrupt_pixels: num_classes out of range");
  LabelImage out = labels;
  const std::size_t n = labels.num_pixels();
  const auto count = std::size_t(std::llround(noise_ratio * double(n)));
  // Partial Fisher-Yates: the first `count` slots become a uniform random subset.
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::vector<std::uint8_t> choices;
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[i + rng.below(n - i)]);
    const std::uint8_t original = labels[order[i]];
    choices.clear();
    for (int c = 0; c < num_classes; ++c) {
      if (c != original) choices.push_back(std::uint8_t(c));
    }
    if (original != kVoidLabel) choices.push_back(kVoidLabel);
    out[order[i]] = choices[rng.below(choices.size())];
  }
  return out;
}

std::vector<int> region_corruption_frames(std::span<const LabelImage> instances, int instance_id, double noise_ratio,
                                          RegionCriterion criterion) {
  check_ratio(noise_ratio, "corrupt_regions");
  std::vector<std::pair<double, int>> visible;  // (area ratio, frame)
  for (std::size_t f = 0; f < instances.size(); ++f) {
    const auto& img = instances[f];
    const auto area = std::count(img.data.begin(), img.data.end(), std::uint8_t(instance_id));
    if (area > 0) visible.emplace_back(double(area) / double(img.num_pixels()), int(f));
  }
  std::sort(visible.begin(), visible.end());
  const auto count = std::size_t(std::llround(noise_ratio * double(visible.size())));
  std::vector<int> frames;
  if (criterion == RegionCriterion::Sort) {
    for (std::size_t i = 0; i < count; ++i) frames.push_back(visible[i].second);
  } else {
    std::vector<int> ranks(visible.size());
    std::iota(ranks.begin(), ranks.end(), 0);
    for (int r : even_subset(ranks, count)) frames.push_back(visible[r].second);
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

std::vector<LabelImage> corrupt_regions(std::span<const LabelImage> labels, std::span<const LabelImage> instances,
                                        int target_class, double noise_ratio, RegionCriterion criterion,
                                        int num_classes, Rng& rng) {
  check_ratio(noise_ratio, "corrupt_regions");
  if (instances.size() != labels.size()) throw ConfigError("corrupt_regions: instance maps are required for every frame");
  if (target_class < 0 || target_class >= num_classes || num_classes < 2) {
    throw ConfigError("corrupt_regions: target class out of range");
  }
  std::map<int, bool> target_instances;
  for (std::size_t f = 0; f < labels.size(); ++f) {
    if (!labels[f].same_shape(instances[f])) throw ConfigError("corrupt_regions: label and instance sizes differ");
    for (std::size_t p = 0; p < labels[f].num_pixels(); ++p) {
      if (labels[f][p] == target_class && instances[f][p] != 0) target_instances[instances[f][p]] = true;
    }
  }
  if (target_instances.size() < 2) {
    throw ConfigError("corrupt_regions: target class " + std::to_string(target_class) + " has fewer than 2 instances");
  }
  std::vector<LabelImage> out(labels.begin(), labels.end());
  for (const auto& [id, unused] : target_instances) {
    for (int f : region_corruption_frames(instances, id, noise_ratio, criterion)) {
      auto flipped = std::uint8_t(rng.below(std::uint64_t(num_classes - 1)));
      if (flipped >= target_class) ++flipped;
      for (std::size_t p = 0; p < out[f].num_pixels(); ++p) {
        if (instances[f][p] == id) out[f][p] = flipped;
      }
    }
  }
  return out;
}

LabelImage downscale_labels(const LabelImage& labels, int factor, DownscaleMode mode) {
  if (factor < 1) throw ConfigError("downscale_labels: factor must be >= 1");
  const int w = labels.width, h = labels.height;
  LabelImage out(w, h, 1, kVoidLabel);
  if (mode == DownscaleMode::SparseVoid) {
    for (int r = 0; r < h; r += factor) {
      for (int c = 0; c < w; c += factor) out.at(c, r) = labels.at(c, r);
    }
    return out;
  }
  const int lw = std::max(1, w / factor), lh = std::max(1, h / factor);
  for (int r = 0; r < h; ++r) {
    // Up: high-res pixel -> low-res cell; down: low-res cell -> its source pixel.
    const int lr = std::min(lh - 1, int(std::int64_t(r) * lh / h));
    const int sr = int(std::int64_t(lr) * h / lh);
    for (int c = 0; c < w; ++c) {
      const int lc = std::min(lw - 1, int(std::int64_t(c) * lw / w));
      const int sc = int(std::int64_t(lc) * w / lw);
      out.at(c, r) = labels.at(sc, sr);
    }
  }
  return out;
}

LabelImage partial_labels(const LabelImage& labels, PartialBudget budget, Rng& rng) {
  if (!budget.single_click) check_ratio(budget.fraction, "partial_labels");
  const int w = labels.width, h = labels.height;
  LabelImage out(w, h, 1, kVoidLabel);
  std::map<int, std::vector<std::uint32_t>> by_class;
  for (std::size_t p = 0; p < labels.num_pixels(); ++p) {
    if (labels[p] != kVoidLabel) by_class[labels[p]].push_back(std::uint32_t(p));
  }
  std::vector<std::uint8_t> taken(labels.num_pixels(), 0);
  for (const auto& [cls, pixels] : by_class) {
    const std::size_t want =
        budget.single_click ? 1 : std::max<std::size_t>(1, std::size_t(std::llround(budget.fraction * pixels.size())));
    std::size_t got = 0;
    std::deque<std::uint32_t> frontier;
    auto take = [&](std::uint32_t p) {
      taken[p] = 1;
      out[p] = std::uint8_t(cls);
      ++got;
      frontier.push_back(p);
    };
    while (got < want) {
      if (frontier.empty()) {
        std::vector<std::uint32_t> free;
        for (auto p : pixels) {
          if (!taken[p]) free.push_back(p);
        }
        take(free[rng.below(free.size())]);
        continue;
      }
      const std::uint32_t p = frontier.front();
      frontier.pop_front();
      const int x = int(p % w), y = int(p / w);
      const int nx[4] = {x + 1, x - 1, x, x};
      const int ny[4] = {y, y, y + 1, y - 1};
      for (int k = 0; k < 4 && got < want; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
        const auto q = std::uint32_t(ny[k] * w + nx[k]);
        if (!taken[q] && labels[q] == cls) take(q);
      }
    }
  }
  return out;
}

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes), counts_(std::size_t(num_classes) * num_classes, 0), void_(num_classes, 0) {}

void ConfusionMatrix::add(int gt, int pred) {
  if (gt == kVoidLabel) return;
  if (gt < 0 || gt >= num_classes_) throw DomainError("confusion matrix: ground-truth label out of range");
  if (pred == kVoidLabel) {
    ++void_[gt];
    return;
  }
  if (pred < 0 || pred >= num_classes_) throw DomainError("confusion matrix: predicted label out of range");
  ++counts_[std::size_t(gt) * num_classes_ + pred];
}

void ConfusionMatrix::add(const LabelImage& pred, const LabelImage& gt) {
  if (!pred.same_shape(gt)) throw DomainError("confusion matrix: image sizes differ");
  for (std::size_t p = 0; p < gt.num_pixels(); ++p) add(gt[p], pred[p]);
}

std::uint64_t ConfusionMatrix::gt_total(int gt) const {
  std::uint64_t s = void_[gt];
  for (int p = 0; p < num_classes_; ++p) s += at(gt, p);
  return s;
}

std::uint64_t ConfusionMatrix::pred_total(int pred) const {
  std::uint64_t s = 0;
  for (int g = 0; g < num_classes_; ++g) s += at(g, pred);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (int g = 0; g < num_classes_; ++g) s += gt_total(g);
  return s;
}

SegmentationMetrics segmentation_metrics(const ConfusionMatrix& cm) {
  SegmentationMetrics m;
  const std::uint64_t total = cm.total();
  if (total == 0) throw DomainError("segmentation metrics: no labelled ground-truth pixels");
  std::uint64_t correct = 0;
  double recall_sum = 0.0, iou_sum = 0.0;
  int recall_n = 0, iou_n = 0;
  for (int c = 0; c < cm.num_classes(); ++c) {
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t gt = cm.gt_total(c);
    const std::uint64_t pred = cm.pred_total(c);
    correct += tp;
    if (gt > 0) {
      recall_sum += double(tp) / double(gt);
      ++recall_n;
    }
    if (gt + pred > 0) {
      iou_sum += double(tp) / double(gt + pred - tp);
      ++iou_n;
    }
  }
  m.total_acc = double(correct) / double(total);
  m.avg_acc = recall_sum / recall_n;
  m.miou = iou_sum / iou_n;
  return m;
}

SegmentationMetrics segmentation_metrics(std::span<const LabelImage> pred, std::span<const LabelImage> gt,
                                         int num_classes) {
  if (pred.size() != gt.size()) throw DomainError("segmentation metrics: frame counts differ");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < gt.size(); ++i) cm.add(pred[i], gt[i]);
  return segmentation_metrics(cm);
}

double psnr(std::span<const RgbImage> pred, std::span<const RgbImage> gt) {
  if (pred.size() != gt.size() || gt.empty()) throw DomainError("psnr: frame counts differ or are zero");
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!pred[i].same_shape(gt[i])) throw DomainError("psnr: image sizes differ");
    for (std::size_t k = 0; k < gt[i].data.size(); ++k) {
      const double d = double(pred[i].data[k]) - double(gt[i].data[k]);
      se += d * d;
    }
    n += gt[i].data.size();
  }
  if (se == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(double(n) / se));
}

double psnr(const RgbImage& pred, const RgbImage& gt) { return psnr(std::span(&pred, 1), std::span(&gt, 1)); }

DepthMetrics depth_metrics(std::span<const DepthImage> pred, std::span<const DepthImage> gt,
                           std::span<const LabelImage> mask) {
  if (pred.size() != gt.size()) throw DomainError("depth metrics: frame counts differ");
  if (!mask.empty() && mask.size() != gt.size()) throw DomainError("depth metrics: mask count differs");
  DepthMetrics m;
  double se = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!pred[i].same_shape(gt[i])) throw DomainError("depth metrics: image sizes differ");
    for (std::size_t p = 0; p < gt[i].num_pixels(); ++p) {
      const double g = gt[i][p], d = pred[i][p];
      if (!(g > 0.0) || (!mask.empty() && !mask[i][p])) continue;
      const double diff = d - g;
      m.abs_rel += std::abs(diff) / g;
      m.abs_diff += std::abs(diff);
      m.sq_rel += diff * diff / g;
      se += diff * diff;
      const double ratio = std::max(d / g, g / d);
      m.delta1 += ratio < 1.25 ? 1.0 : 0.0;
      m.delta2 += ratio < 1.25 * 1.25 ? 1.0 : 0.0;
      m.delta3 += ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0;
      ++m.count;
    }
  }
  if (m.count == 0) throw DomainError("depth metrics: no valid pixels");
  const double n = double(m.count);
  m.abs_rel /= n;
  m.abs_diff /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(se / n);
  m.delta1 /= n;
  m.delta2 /= n;
  m.delta3 /= n;
  return m;
}

std::string metrics_csv(std::span<const MetricsReport> reports) {
  std::ostringstream out;
  out << "name,miou,avg_acc,total_acc,psnr,abs_rel,abs_diff,sq_rel,rmse,delta1,delta2,delta3\n";
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : reports) {
    out << r.name;
    if (r.segmentation) {
      out << ',' << num(r.segmentation->miou) << ',' << num(r.segmentation->avg_acc) << ','
          << num(r.segmentation->total_acc);
    } else {
      out << ",,,";
    }
    out << ',' << (r.psnr ? num(*r.psnr) : "");
    if (r.depth) {
      const auto& d = *r.depth;
      for (double v : {d.abs_rel, d.abs_diff, d.sq_rel, d.rmse, d.delta1, d.delta2, d.delta3}) out << ',' << num(v);
    } else {
      out << ",,,,,,,";
    }
    out << '\n';
  }
  return out.str();
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsReport> reports) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << metrics_csv(reports);
}

void write_metrics_json(const std::filesystem::path& path, std::span<const MetricsReport> reports) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json j{{"name", r.name}};
    if (r.segmentation) {
      j["miou"] = r.segmentation->miou;
      j["avg_acc"] = r.segmentation->avg_acc;
      j["total_acc"] = r.segmentation->total_acc;
    }
    if (r.psnr) j["psnr"] = *r.psnr;
    if (r.depth) {
      j["depth"] = {{"abs_rel", r.depth->abs_rel}, {"abs_diff", r.depth->abs_diff}, {"sq_rel", r.depth->sq_rel},
                    {"rmse", r.depth->rmse},       {"delta1", r.depth->delta1},     {"delta2", r.depth->delta2},
                    {"delta3", r.depth->delta3},   {"count", r.depth->count}};
    }
    rows.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << rows.dump(2) << '\n';
}

}  // namespace snerf
