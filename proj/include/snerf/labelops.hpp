#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snerf/image.hpp"
#include "snerf/rng.hpp"

namespace snerf {

// ---------------------------------------------------------------------------
// Supervision degradations. All keep image sizes and are deterministic per rng.

/// Reassigns exactly round(ratio * pixels) pixels, each to a value drawn
/// uniformly from {0..C-1, void} minus its current value.
LabelImage corrupt_pixels(const LabelImage& labels, double noise_ratio, int num_classes, Rng& rng);

enum class RegionCriterion { Sort, Even };

/// Per instance of `target_class`: rank the frames where it is visible by
/// occupied area (ascending), pick round(ratio * visible) of them (Sort: the
/// smallest; Even: evenly spread over the ranking) and flip every pixel of
/// the instance there to one random non-void class other than target_class.
std::vector<LabelImage> corrupt_regions(std::span<const LabelImage> labels, std::span<const LabelImage> instances,
                                        int target_class, double noise_ratio, RegionCriterion criterion,
                                        int num_classes, Rng& rng);

/// Frames whose instance `instance_id` gets corrupted under the given rule;
/// exposed so the ranking can be tested on its own.
std::vector<int> region_corruption_frames(std::span<const LabelImage> instances, int instance_id, double noise_ratio,
                                          RegionCriterion criterion);

enum class DownscaleMode { DenseInterp, SparseVoid };

/// DenseInterp: nearest-neighbour down by S then back up. SparseVoid: keep
/// pixels whose row and column are multiples of S, void elsewhere.
LabelImage downscale_labels(const LabelImage& labels, int factor, DownscaleMode mode);

struct PartialBudget {
  bool single_click = true;
  double fraction = 0.0;  ///< of each class's pixels in the frame, used when !single_click

  static PartialBudget click() { return {true, 0.0}; }
  static PartialBudget of(double fraction) { return {false, fraction}; }
};

/// Keeps, per class present in the frame, one 4-connected region grown from a
/// random seed pixel up to the budget (re-seeding inside the class if the
/// component is exhausted). Everything else becomes void.
LabelImage partial_labels(const LabelImage& labels, PartialBudget budget, Rng& rng);

// ---------------------------------------------------------------------------
// Evaluation.

/// GT rows x prediction columns. Void GT pixels are skipped; a void
/// prediction on a valid GT pixel is a miss recorded in `void_predictions`.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = 0);

  void add(int gt, int pred);
  void add(const LabelImage& pred, const LabelImage& gt);

  int num_classes() const { return num_classes_; }
  std::uint64_t at(int gt, int pred) const { return counts_[std::size_t(gt) * num_classes_ + pred]; }
  std::uint64_t void_predictions(int gt) const { return void_[gt]; }
  std::uint64_t gt_total(int gt) const;
  std::uint64_t pred_total(int pred) const;
  std::uint64_t total() const;

 private:
  int num_classes_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> void_;
};

struct SegmentationMetrics {
  double miou = 0.0;       ///< over classes present in GT or prediction
  double avg_acc = 0.0;    ///< mean recall over classes present in GT
  double total_acc = 0.0;  ///< correct / evaluated
};

SegmentationMetrics segmentation_metrics(const ConfusionMatrix& cm);
SegmentationMetrics segmentation_metrics(std::span<const LabelImage> pred, std::span<const LabelImage> gt,
                                         int num_classes);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels; identical images give kPsnrCap.
double psnr(const RgbImage& pred, const RgbImage& gt);
double psnr(std::span<const RgbImage> pred, std::span<const RgbImage> gt);

struct DepthMetrics {
  double abs_rel = 0.0;
  double abs_diff = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double delta1 = 0.0;  ///< fraction with max(d/gt, gt/d) < 1.25
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t count = 0;
};

/// Over pixels with gt > 0 (and mask set, when given).
DepthMetrics depth_metrics(std::span<const DepthImage> pred, std::span<const DepthImage> gt,
                           std::span<const LabelImage> mask = {});

struct MetricsReport {
  std::string name;
  std::optional<SegmentationMetrics> segmentation;
  std::optional<double> psnr;
  std::optional<DepthMetrics> depth;
};

/// One row per report; absent metrics are left empty. Fixed precision so
/// equal inputs produce byte-identical files.
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsReport> reports);
void write_metrics_json(const std::filesystem::path& path, std::span<const MetricsReport> reports);
std::string metrics_csv(std::span<const MetricsReport> reports);

}  // namespace snerf
