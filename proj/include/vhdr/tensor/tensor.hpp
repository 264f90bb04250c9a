#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vhdr/core/errors.hpp"

namespace vhdr {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

/// Dense row-major float32 array of rank <= 5.
///
/// Network data uses the N x C x F x H x W layout; clips on disk and in the
/// optics module use F x H x W x 3.
class Tensor {
 public:
  static constexpr std::size_t kMaxRank = 5;

  Tensor() = default;

  explicit Tensor(Shape shape, float fill = 0.0f) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
  }

  Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
      throw DataError("tensor: " + std::to_string(data_.size()) + " values do not fill shape " + shape_str(shape_));
    }
  }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  static Tensor scalar(float v) { return Tensor(Shape{}, std::vector<float>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* raw() noexcept { return data_.data(); }
  const float* raw() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Multi-index access; number of indices must equal the rank.
  template <typename... Idx>
  float& at(Idx... idx) {
    return data_[offset({static_cast<std::int64_t>(idx)...})];
  }
  template <typename... Idx>
  float at(Idx... idx) const {
    return data_[offset({static_cast<std::int64_t>(idx)...})];
  }

  std::size_t offset(std::initializer_list<std::int64_t> idx) const {
    if (idx.size() != shape_.size()) throw DataError("tensor: index rank mismatch for shape " + shape_str(shape_));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : idx) {
      if (i < 0 || i >= shape_[axis]) {
        throw DataError("tensor: index " + std::to_string(i) + " out of range on axis " + std::to_string(axis) +
                        " of " + shape_str(shape_));
      }
      off = off * static_cast<std::size_t>(shape_[axis]) + static_cast<std::size_t>(i);
      ++axis;
    }
    return off;
  }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != shape_numel(shape_)) {
      throw DataError("tensor: cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
  }

  float item() const {
    if (data_.size() != 1) throw DataError("tensor: item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  void fill(float v) noexcept { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor& a, const Tensor& b) noexcept {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    if (shape_.size() > kMaxRank) throw DataError("tensor: rank " + std::to_string(shape_.size()) + " exceeds 5");
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (shape_[i] < 0) throw DataError("tensor: negative extent on axis " + std::to_string(i));
    }
  }

  Shape shape_;
  std::vector<float> data_;
};

/// Sum with 64-bit accumulation.
inline double sum_f64(std::span<const float> v) noexcept {
  double s = 0.0;
  for (float x : v) s += x;
  return s;
}

/// F x H x W x C  ->  1 x C x F x H x W
inline Tensor clip_to_network(const Tensor& clip) {
  if (clip.rank() != 4) throw DataError("clip_to_network: expected F x H x W x C, got " + shape_str(clip.shape()));
  const auto f = clip.extent(0), h = clip.extent(1), w = clip.extent(2), c = clip.extent(3);
  Tensor out({1, c, f, h, w});
  const std::size_t plane = static_cast<std::size_t>(f * h * w);
  for (std::int64_t p = 0; p < f * h * w; ++p) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      out[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(p)] =
          clip[static_cast<std::size_t>(p * c + ch)];
    }
  }
  return out;
}

/// Stacks clips of identical shape into one N x C x F x H x W batch.
inline Tensor clips_to_batch(std::span<const Tensor> clips) {
  if (clips.empty()) throw DataError("clips_to_batch: empty batch");
  const Shape first = clips.front().shape();
  std::vector<float> data;
  for (const auto& c : clips) {
    if (c.shape() != first) throw DataError("clips_to_batch: clip shapes differ");
    const Tensor t = clip_to_network(c);
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor({static_cast<std::int64_t>(clips.size()), first[3], first[0], first[1], first[2]}, std::move(data));
}

/// Batch item `n` of N x C x F x H x W  ->  F x H x W x C
inline Tensor network_to_clip(const Tensor& net, std::int64_t n = 0) {
  if (net.rank() != 5) throw DataError("network_to_clip: expected N x C x F x H x W, got " + shape_str(net.shape()));
  const auto c = net.extent(1), f = net.extent(2), h = net.extent(3), w = net.extent(4);
  if (n < 0 || n >= net.extent(0)) throw DataError("network_to_clip: batch index out of range");
  Tensor out({f, h, w, c});
  const std::size_t plane = static_cast<std::size_t>(f * h * w);
  const std::size_t base = static_cast<std::size_t>(n * c) * plane;
  for (std::int64_t p = 0; p < f * h * w; ++p) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      out[static_cast<std::size_t>(p * c + ch)] = net[base + static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(p)];
    }
  }
  return out;
}

}  // namespace vhdr
