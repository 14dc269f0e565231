#pragma once

// 8-bit PNG I/O. Float rasters in [-1, 1] map affinely onto [0, 255].

#include <png.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fsvt/tensor.hpp"

namespace fsvt {

using Image = Tensor<float>;  // (3, H, W), values in [-1, 1]

inline std::uint8_t to_byte(float v) {
  const float s = std::round((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(s);
}

inline float from_byte(std::uint8_t b) { return b / 127.5f - 1.0f; }

// Writes raw bytes laid out (H, W, C) with C in {1, 3}.
inline void write_png_bytes(const std::string& path, const std::vector<std::uint8_t>& hwc, int height, int width,
                            int channels) {
  require(channels == 1 || channels == 3, "invalid_argument", "PNG writer supports 1 or 3 channels");
  require(hwc.size() == static_cast<std::size_t>(height) * width * channels, "shape_mismatch", "PNG buffer size");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, hwc.data(), 0, nullptr))
    throw Error("io", "cannot write PNG " + path + ": " + img.message);
}

inline std::vector<std::uint8_t> read_png_bytes(const std::string& path, int& height, int& width, int channels) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) throw Error("io", "cannot read PNG " + path);
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error("io", "cannot decode PNG " + path + ": " + img.message);
  }
  height = static_cast<int>(img.height);
  width = static_cast<int>(img.width);
  return buf;
}

// Saves a (1|3, H, W) raster in [-1, 1].
inline void save_png(const std::string& path, const Tensor<float>& img) {
  require(img.rank() == 3 && (img.channels() == 1 || img.channels() == 3), "shape_mismatch",
          "save_png expects (1|3,H,W), got " + img.shape().str());
  const int C = img.channels(), H = img.height(), W = img.width();
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(H) * W * C);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) buf[(static_cast<std::size_t>(y) * W + x) * C + c] = to_byte(img.at(c, y, x));
  write_png_bytes(path, buf, H, W, C);
}

inline Tensor<float> load_png(const std::string& path, int channels = 3) {
  int H = 0, W = 0;
  auto buf = read_png_bytes(path, H, W, channels);
  Tensor<float> img(Shape{channels, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(c, y, x) = from_byte(buf[(static_cast<std::size_t>(y) * W + x) * channels + c]);
  return img;
}

// Label map (H, W) of small integers stored as an 8-bit gray PNG.
inline void save_label_png(const std::string& path, const std::vector<std::uint8_t>& labels, int height, int width) {
  write_png_bytes(path, labels, height, width, 1);
}

inline std::vector<std::uint8_t> load_label_png(const std::string& path, int& height, int& width) {
  return read_png_bytes(path, height, width, 1);
}

}  // namespace fsvt
