#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snerf/geometry.hpp"
#include "snerf/image.hpp"

namespace snerf {

struct Frame {
  RgbImage rgb;
  LabelImage labels;  ///< class ids, kVoidLabel = unlabelled
  std::optional<LabelImage> instances;
  std::optional<DepthImage> depth;  ///< ray distance, metres
  Pose pose;
};

/// Posed RGB frames with semantic labels. Layout on disk:
///
///   camera.json  {width, height, fx, fy, cx, cy, num_classes, class_names[]}
///   frames.json  [{rgb, label, instance?, depth?, pose: 16 numbers row-major camera-to-world}]
///   rgb/*.png (8-bit RGB), label/*.png and instance/*.png (8-bit gray), depth/*.pfm (float32 LE)
struct Dataset {
  Camera camera;
  int num_classes = 0;  ///< excluding void
  std::vector<std::string> class_names;
  std::vector<Frame> frames;

  /// Throws ValidationError naming the offending frame/pixel.
  void validate() const;
  bool has_depth() const;
  bool has_instances() const;
  std::vector<LabelImage> label_maps() const;
};

Dataset load_dataset(const std::filesystem::path& dir);

/// Writes the layout above. Refuses to touch a non-empty directory unless `overwrite`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir, bool overwrite = false);

struct Split {
  std::vector<int> train;
  std::vector<int> test;
};

/// Training frames are the indices divisible by `stride`. Test frames are the
/// midpoints train[j] + stride / 2 between consecutive training frames.
Split split(std::size_t num_frames, int stride);

/// Evenly spaced subset of `values` of the given size (linspace over
/// positions, round to nearest, first and last pinned).
std::vector<int> even_subset(std::span<const int> values, std::size_t count);

/// Which training frames contribute semantic labels. RGB is never masked.
struct SupervisionMask {
  std::vector<int> frames;  ///< dataset indices of the training frames
  std::vector<bool> labelled;

  std::vector<int> labelled_frames() const;
  bool is_labelled(int frame) const;
};

/// Keeps ceil((1 - ratio) * N) frames, evenly spaced, first always kept.
SupervisionMask select_keyframes(std::span<const int> train, double sparsity_ratio);

/// Manual key-frame choice: `chosen` are dataset indices that must belong to `train`.
SupervisionMask select_keyframes(std::span<const int> train, std::span<const int> chosen);

}  // namespace snerf
