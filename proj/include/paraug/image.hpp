#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <png.h>

#include "paraug/error.hpp"

namespace paraug {

// Row-major interleaved RGB, float samples in [0,1].
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  static constexpr std::size_t channels = 3;
  std::vector<float> data;

  ImageBuffer() = default;
  ImageBuffer(std::size_t w, std::size_t h, float fill = 0.f) : width(w), height(h), data(w * h * channels, fill) {}

  float& at(std::size_t x, std::size_t y, std::size_t c) { return data[(y * width + x) * channels + c]; }
  float at(std::size_t x, std::size_t y, std::size_t c) const { return data[(y * width + x) * channels + c]; }

  void validate() const {
    if (data.size() != width * height * channels) throw ValidationError("image buffer size does not match dimensions");
    for (float v : data)
      if (!std::isfinite(v) || v < 0.f || v > 1.f) throw ValidationError("image value outside [0,1]");
  }

  bool operator==(const ImageBuffer&) const = default;
};

inline std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

inline std::vector<std::uint8_t> to_rgb8(const ImageBuffer& img) {
  std::vector<std::uint8_t> out(img.data.size());
  std::transform(img.data.begin(), img.data.end(), out.begin(), quantize);
  return out;
}

inline ImageBuffer from_rgb8(std::size_t w, std::size_t h, const std::uint8_t* px) {
  ImageBuffer img(w, h);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = float(px[i]) / 255.f;
  return img;
}

inline std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  if (img.width == 0 || img.height == 0) throw ValidationError("cannot encode an empty image");
  const auto px = to_rgb8(img);
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = png_uint_32(img.width);
  pi.height = png_uint_32(img.height);
  pi.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, px.data(), 0, nullptr))
    throw Error(std::string("png encode failed: ") + pi.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, px.data(), 0, nullptr))
    throw Error(std::string("png encode failed: ") + pi.message);
  out.resize(size);
  return out;
}

inline ImageBuffer decode_png(const std::uint8_t* bytes, std::size_t n) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pi, bytes, n)) throw ParseError(std::string("png decode failed: ") + pi.message);
  pi.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, px.data(), 0, nullptr)) {
    png_image_free(&pi);
    throw ParseError(std::string("png decode failed: ") + pi.message);
  }
  return from_rgb8(pi.width, pi.height, px.data());
}

inline ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes) { return decode_png(bytes.data(), bytes.size()); }
inline ImageBuffer decode_png(const std::string& bytes) {
  return decode_png(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  const auto tmp = std::filesystem::path(p.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

inline ImageBuffer load_png(const std::filesystem::path& p) { return decode_png(read_file_bytes(p)); }
inline void save_png(const ImageBuffer& img, const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  write_file_bytes(p, encode_png(img));
}

// Copies the w x h region at (x, y); caller guarantees it lies inside the image.
inline ImageBuffer crop(const ImageBuffer& img, std::size_t x, std::size_t y, std::size_t w, std::size_t h) {
  if (w == 0 || h == 0 || x + w > img.width || y + h > img.height) throw ValidationError("crop region outside image");
  ImageBuffer out(w, h);
  for (std::size_t r = 0; r < h; ++r) {
    const float* src = &img.data[((y + r) * img.width + x) * 3];
    std::copy(src, src + w * 3, &out.data[r * w * 3]);
  }
  return out;
}

}  // namespace paraug
