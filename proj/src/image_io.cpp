#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "snerf/errors.hpp"
#include "snerf/image.hpp"

namespace snerf {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    if (mode[0] == 'r') throw MissingFileError("cannot open " + path.string());
    throw DataError("cannot write " + path.string());
  }
  return f;
}

void write_png_raw(const std::filesystem::path& path, int width, int height, int color_type, int channels,
                   const std::uint8_t* pixels) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng: failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  // Fixed header fields keep the output byte-stable across runs.
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(pixels + size_t(r) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_png_raw(const std::filesystem::path& path, int want_channels, int& width,
                                       int& height) {
  auto file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": corrupt PNG");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  width = int(png_get_image_width(png, info));
  height = int(png_get_image_height(png, info));
  if (bit_depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": expected 8-bit PNG");
  }
  const bool ok = (want_channels == 1 && color == PNG_COLOR_TYPE_GRAY) ||
                  (want_channels == 3 && color == PNG_COLOR_TYPE_RGB);
  if (!ok) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + (want_channels == 1 ? ": expected 8-bit grayscale PNG" : ": expected 8-bit RGB PNG"));
  }
  std::vector<std::uint8_t> pixels(size_t(width) * height * want_channels);
  for (int r = 0; r < height; ++r) png_read_row(png, pixels.data() + size_t(r) * width * want_channels, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

std::uint8_t to_byte(float v) { return std::uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

}  // namespace

void quantize_rgb(RgbImage& image) {
  for (float& v : image.data) v = float(to_byte(v)) / 255.0f;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.channels != 3) throw DataError("write_png: RGB image must have 3 channels");
  std::vector<std::uint8_t> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), to_byte);
  write_png_raw(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 3, bytes.data());
}

void write_png(const std::filesystem::path& path, const LabelImage& image) {
  if (image.channels != 1) throw DataError("write_png: label image must have 1 channel");
  write_png_raw(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 1, image.data.data());
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto bytes = read_png_raw(path, 3, w, h);
  RgbImage img(w, h, 3);
  for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = float(bytes[i]) / 255.0f;
  return img;
}

LabelImage read_png_gray(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto bytes = read_png_raw(path, 1, w, h);
  LabelImage img(w, h, 1);
  img.data = std::move(bytes);
  return img;
}

void write_pfm(const std::filesystem::path& path, const Image<float>& image) {
  static_assert(std::endian::native == std::endian::little, "PFM writer assumes a little-endian host");
  if (image.channels != 1 && image.channels != 3) throw DataError("write_pfm: 1 or 3 channels required");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << (image.channels == 3 ? "PF" : "Pf") << "\n" << image.width << " " << image.height << "\n-1.0\n";
  const size_t row_len = size_t(image.width) * image.channels;
  for (int r = image.height - 1; r >= 0; --r) {
    out.write(reinterpret_cast<const char*>(image.data.data() + size_t(r) * row_len),
              std::streamsize(row_len * sizeof(float)));
  }
  if (!out) throw DataError("failed writing " + path.string());
}

Image<float> read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (!in || (magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || scale == 0.0) {
    throw FormatError(path.string() + ": malformed PFM header");
  }
  if (scale > 0.0) throw FormatError(path.string() + ": big-endian PFM is not supported");
  in.get();  // single whitespace after the scale line
  const int channels = magic == "PF" ? 3 : 1;
  Image<float> img(w, h, channels);
  const size_t row_len = size_t(w) * channels;
  for (int r = h - 1; r >= 0; --r) {
    in.read(reinterpret_cast<char*>(img.data.data() + size_t(r) * row_len), std::streamsize(row_len * sizeof(float)));
  }
  if (!in) throw FormatError(path.string() + ": truncated PFM data");
  return img;
}

}  // namespace snerf
