#include "snerf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "snerf/errors.hpp"
#include "snerf/serialize.hpp"

namespace snerf {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("missing file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::string frame_stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05zu", i);
  return buf;
}

}  // namespace

void Dataset::validate() const {
  try {
    camera.validate();
  } catch (const DomainError& e) {
    throw ValidationError(std::string("dataset camera: ") + e.what());
  }
  if (num_classes < 1 || num_classes > 255) throw ValidationError("dataset: num_classes must be in [1, 255]");
  if (!class_names.empty() && int(class_names.size()) != num_classes) {
    throw ValidationError("dataset: class_names has " + std::to_string(class_names.size()) + " entries, expected " +
                          std::to_string(num_classes));
  }
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Frame& fr = frames[f];
    const std::string where = "frame " + std::to_string(f);
    auto check_dims = [&](int w, int h, int c, int want_c, const char* what) {
      if (w != camera.width || h != camera.height || c != want_c) {
        throw ValidationError(where + ": " + what + " is " + std::to_string(w) + "x" + std::to_string(h) + "x" +
                              std::to_string(c) + ", camera expects " + std::to_string(camera.width) + "x" +
                              std::to_string(camera.height) + "x" + std::to_string(want_c));
      }
    };
    check_dims(fr.rgb.width, fr.rgb.height, fr.rgb.channels, 3, "rgb");
    check_dims(fr.labels.width, fr.labels.height, fr.labels.channels, 1, "label map");
    if (fr.instances) check_dims(fr.instances->width, fr.instances->height, fr.instances->channels, 1, "instance map");
    if (fr.depth) check_dims(fr.depth->width, fr.depth->height, fr.depth->channels, 1, "depth map");
    for (std::size_t p = 0; p < fr.labels.data.size(); ++p) {
      const int id = fr.labels.data[p];
      if (id != kVoidLabel && id >= num_classes) {
        throw ValidationError(where + ": label id " + std::to_string(id) + " >= num_classes " +
                              std::to_string(num_classes) + " at pixel (" + std::to_string(p % camera.width) + ", " +
                              std::to_string(p / camera.width) + ")");
      }
    }
    try {
      fr.pose.validate();
    } catch (const DomainError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
}

bool Dataset::has_depth() const {
  return !frames.empty() && std::all_of(frames.begin(), frames.end(), [](const Frame& f) { return f.depth.has_value(); });
}

bool Dataset::has_instances() const {
  return !frames.empty() &&
         std::all_of(frames.begin(), frames.end(), [](const Frame& f) { return f.instances.has_value(); });
}

std::vector<LabelImage> Dataset::label_maps() const {
  std::vector<LabelImage> maps;
  maps.reserve(frames.size());
  for (const auto& f : frames) maps.push_back(f.labels);
  return maps;
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingFileError("dataset directory not found: " + dir.string());
  const json cam = read_json(dir / "camera.json");
  const json frames = read_json(dir / "frames.json");
  Dataset ds;
  try {
    ds.camera = cam.get<Camera>();
    ds.num_classes = cam.at("num_classes").get<int>();
    ds.class_names = cam.value("class_names", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw FormatError((dir / "camera.json").string() + ": " + e.what());
  }
  if (!frames.is_array()) throw FormatError((dir / "frames.json").string() + ": expected an array");
  ds.frames.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const json& entry = frames[i];
    Frame fr;
    std::vector<double> pose;
    std::string rgb_path, label_path;
    try {
      rgb_path = entry.at("rgb").get<std::string>();
      label_path = entry.at("label").get<std::string>();
      pose = entry.at("pose").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw FormatError("frames.json entry " + std::to_string(i) + ": " + e.what());
    }
    if (pose.size() != 16) throw FormatError("frames.json entry " + std::to_string(i) + ": pose needs 16 numbers");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) fr.pose.rotation(r, c) = pose[r * 4 + c];
      fr.pose.translation(r) = pose[r * 4 + 3];
    }
    if (pose[12] != 0.0 || pose[13] != 0.0 || pose[14] != 0.0 || pose[15] != 1.0) {
      throw ValidationError("frame " + std::to_string(i) + ": pose bottom row must be 0 0 0 1");
    }
    fr.rgb = read_png_rgb(dir / rgb_path);
    fr.labels = read_png_gray(dir / label_path);
    if (entry.contains("instance")) fr.instances = read_png_gray(dir / entry["instance"].get<std::string>());
    if (entry.contains("depth")) fr.depth = read_pfm(dir / entry["depth"].get<std::string>());
    ds.frames.push_back(std::move(fr));
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir, bool overwrite) {
  ds.validate();
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!overwrite) throw ConfigError("output directory " + dir.string() + " is not empty (use --overwrite)");
    for (const char* sub : {"rgb", "label", "instance", "depth"}) fs::remove_all(dir / sub);
    fs::remove(dir / "camera.json");
    fs::remove(dir / "frames.json");
  }
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "label");
  json cam = ds.camera;
  cam["num_classes"] = ds.num_classes;
  cam["class_names"] = ds.class_names;
  write_json(dir / "camera.json", cam);

  json frames = json::array();
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    const Frame& fr = ds.frames[i];
    const std::string stem = frame_stem(i);
    json entry;
    entry["rgb"] = "rgb/" + stem + ".png";
    entry["label"] = "label/" + stem + ".png";
    write_png(dir / entry["rgb"].get<std::string>(), fr.rgb);
    write_png(dir / entry["label"].get<std::string>(), fr.labels);
    if (fr.instances) {
      fs::create_directories(dir / "instance");
      entry["instance"] = "instance/" + stem + ".png";
      write_png(dir / entry["instance"].get<std::string>(), *fr.instances);
    }
    if (fr.depth) {
      fs::create_directories(dir / "depth");
      entry["depth"] = "depth/" + stem + ".pfm";
      write_pfm(dir / entry["depth"].get<std::string>(), *fr.depth);
    }
    std::vector<double> pose(16, 0.0);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) pose[r * 4 + c] = fr.pose.rotation(r, c);
      pose[r * 4 + 3] = fr.pose.translation(r);
    }
    pose[15] = 1.0;
    entry["pose"] = pose;
    frames.push_back(std::move(entry));
  }
  write_json(dir / "frames.json", frames);
}

Split split(std::size_t num_frames, int stride) {
  if (stride < 1) throw ConfigError("split: stride must be >= 1");
  Split s;
  for (std::size_t i = 0; i < num_frames; i += std::size_t(stride)) s.train.push_back(int(i));
  for (std::size_t j = 0; j + 1 < s.train.size(); ++j) {
    const int mid = s.train[j] + stride / 2;
    if (mid != s.train[j]) s.test.push_back(mid);
  }
  return s;
}

std::vector<int> even_subset(std::span<const int> values, std::size_t count) {
  const std::size_t n = values.size();
  count = std::min(count, n);
  std::vector<int> out;
  if (count == 0) return out;
  if (count == 1) return {values.front()};
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pos = double(i) * double(n - 1) / double(count - 1);
    out.push_back(values[std::size_t(std::llround(pos))]);
  }
  return out;
}

std::vector<int> SupervisionMask::labelled_frames() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (labelled[i]) out.push_back(frames[i]);
  }
  return out;
}

bool SupervisionMask::is_labelled(int frame) const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i] == frame) return labelled[i];
  }
  return false;
}

SupervisionMask select_keyframes(std::span<const int> train, double sparsity_ratio) {
  if (!(sparsity_ratio >= 0.0 && sparsity_ratio < 1.0)) throw ConfigError("sparsity ratio must lie in [0, 1)");
  if (train.empty()) throw ConfigError("select_keyframes: no training frames");
  const double want = (1.0 - sparsity_ratio) * double(train.size());
  // The small slack absorbs representation error, e.g. (1 - 0.9) * 180 = 18.000000000000004.
  const std::size_t keep = std::max<std::size_t>(1, std::size_t(std::ceil(want - 1e-9)));
  const auto kept = even_subset(train, keep);
  SupervisionMask mask;
  mask.frames.assign(train.begin(), train.end());
  mask.labelled.assign(train.size(), false);
  for (std::size_t i = 0; i < train.size(); ++i) {
    mask.labelled[i] = std::find(kept.begin(), kept.end(), train[i]) != kept.end();
  }
  return mask;
}

SupervisionMask select_keyframes(std::span<const int> train, std::span<const int> chosen) {
  SupervisionMask mask;
  mask.frames.assign(train.begin(), train.end());
  mask.labelled.assign(train.size(), false);
  for (int c : chosen) {
    const auto it = std::find(train.begin(), train.end(), c);
    if (it == train.end()) throw ConfigError("key-frame " + std::to_string(c) + " is not a training frame");
    mask.labelled[std::size_t(it - train.begin())] = true;
  }
  if (chosen.empty()) throw ConfigError("select_keyframes: empty key-frame list");
  return mask;
}

}  // namespace snerf
