#pragma once

// Portable float map, colour only ("PF"), little-endian (negative scale).
// Rows are stored bottom-to-top; in memory a frame is H x W x 3, top row first.

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "vhdr/core/errors.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

static_assert(std::endian::native == std::endian::little, "PFM IO assumes a little-endian host");

inline std::string encode_pfm(const Tensor& frame) {
  if (frame.rank() != 3 || frame.extent(2) != 3) {
    throw DataError("write_pfm: expected H x W x 3 frame, got " + shape_str(frame.shape()));
  }
  const auto h = frame.extent(0), w = frame.extent(1);
  std::string out = "PF\n" + std::to_string(w) + " " + std::to_string(h) + "\n-1.0\n";
  const std::size_t header = out.size();
  const std::size_t row = static_cast<std::size_t>(w) * 3;
  out.resize(header + static_cast<std::size_t>(h) * row * 4);
  for (std::int64_t y = 0; y < h; ++y) {
    const float* src = frame.raw() + static_cast<std::size_t>(h - 1 - y) * row;
    std::memcpy(out.data() + header + static_cast<std::size_t>(y) * row * 4, src, row * 4);
  }
  return out;
}

inline Tensor decode_pfm(const std::string& bytes, const std::string& origin = "pfm") {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t b = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (b == pos) throw DataError(origin + ": truncated PFM header");
    return bytes.substr(b, pos - b);
  };
  const std::string magic = token();
  if (magic == "Pf") throw DataError(origin + ": grayscale PFM is not supported (colour \"PF\" only)");
  if (magic != "PF") throw DataError(origin + ": not a PFM file");
  long long w = 0, h = 0;
  double scale = 0.0;
  try {
    w = std::stoll(token());
    h = std::stoll(token());
    scale = std::stod(token());
  } catch (const std::logic_error&) {
    throw DataError(origin + ": malformed PFM header");
  }
  if (w <= 0 || h <= 0) throw DataError(origin + ": non-positive PFM dimensions");
  if (!(scale < 0.0)) throw DataError(origin + ": big-endian PFM (positive scale) is not supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw DataError(origin + ": malformed PFM header");
  }
  ++pos;  // single whitespace byte ends the header
  const std::size_t row = static_cast<std::size_t>(w) * 3;
  const std::size_t need = static_cast<std::size_t>(h) * row * 4;
  if (bytes.size() - pos != need) {
    throw DataError(origin + ": payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                    std::to_string(need));
  }
  Tensor frame({h, w, 3});
  for (long long y = 0; y < h; ++y) {
    std::memcpy(frame.raw() + static_cast<std::size_t>(h - 1 - y) * row, bytes.data() + pos + static_cast<std::size_t>(y) * row * 4,
                row * 4);
  }
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (std::isnan(frame[i])) throw DataError(origin + ": NaN in PFM payload at element " + std::to_string(i));
  }
  return frame;
}

inline void write_pfm(const std::filesystem::path& path, const Tensor& frame) {
  const std::string bytes = encode_pfm(frame);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

inline Tensor read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_pfm(ss.str(), path.string());
}

}  // namespace vhdr
