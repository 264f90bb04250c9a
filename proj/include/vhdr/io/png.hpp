#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

/// Writes an H x W x 3 frame with values in [0,1] as 8-bit RGB. Values are
/// stored as given; callers tone-map first.
inline void write_png(const std::filesystem::path& path, const Tensor& frame) {
  if (frame.rank() != 3 || frame.extent(2) != 3) {
    throw DataError("write_png: expected H x W x 3 frame, got " + shape_str(frame.shape()));
  }
  std::vector<unsigned char> px(frame.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const float v = std::clamp(frame[i], 0.0f, 1.0f);
    px[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(frame.extent(1));
  img.height = static_cast<png_uint_32>(frame.extent(0));
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, px.data(), 0, nullptr)) {
    throw DataError("write_png: " + path.string() + ": " + img.message);
  }
}

/// Reads an 8-bit RGB PNG into H x W x 3 floats in [0,1].
inline Tensor read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw DataError("read_png: " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> px(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
    throw DataError("read_png: " + path.string() + ": " + img.message);
  }
  Tensor frame({static_cast<std::int64_t>(img.height), static_cast<std::int64_t>(img.width), 3});
  for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = static_cast<float>(px[i]) / 255.0f;
  return frame;
}

}  // namespace vhdr
