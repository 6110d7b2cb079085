#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace snerf {

inline constexpr std::uint8_t kVoidLabel = 255;

/// Dense row-major interleaved image.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c = 1, T fill = T{}) : width(w), height(h), channels(c), data(size_t(w) * h * c, fill) {}

  T& at(int col, int row, int ch = 0) { return data[(size_t(row) * width + col) * channels + ch]; }
  const T& at(int col, int row, int ch = 0) const { return data[(size_t(row) * width + col) * channels + ch]; }
  T& operator[](size_t pixel) { return data[pixel * channels]; }
  const T& operator[](size_t pixel) const { return data[pixel * channels]; }

  size_t num_pixels() const { return size_t(width) * height; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
  bool empty() const { return data.empty(); }
  bool operator==(const Image&) const = default;
};

using RgbImage = Image<float>;           ///< 3 channels in [0,1]
using LabelImage = Image<std::uint8_t>;  ///< class ids, 255 = void
using DepthImage = Image<float>;         ///< metres along the ray

/// Rounds to the nearest 8-bit level so in-memory images equal their PNG encoding.
void quantize_rgb(RgbImage& image);

void write_png(const std::filesystem::path& path, const RgbImage& image);
void write_png(const std::filesystem::path& path, const LabelImage& image);
RgbImage read_png_rgb(const std::filesystem::path& path);
LabelImage read_png_gray(const std::filesystem::path& path);

/// Portable float map, little-endian, rows stored bottom-to-top. 1 or 3 channels.
void write_pfm(const std::filesystem::path& path, const Image<float>& image);
Image<float> read_pfm(const std::filesystem::path& path);

}  // namespace snerf
