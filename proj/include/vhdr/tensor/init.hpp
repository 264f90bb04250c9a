#pragma once

#include <cmath>
#include <cstdint>

#include "vhdr/core/random.hpp"
#include "vhdr/tensor/conv.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

/// Kaiming-uniform weights, U(-b, b) with b = sqrt(6 / fan_in), where fan_in
/// is in_channels times the kernel volume.
inline Tensor kaiming_uniform(const ConvSpec& spec, Rng& rng) {
  Tensor w(spec.weight_shape());
  const double fan_in = static_cast<double>(spec.in_channels) * static_cast<double>(spec.kernel_volume());
  const double bound = std::sqrt(6.0 / fan_in);
  for (float& v : w.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return w;
}

}  // namespace vhdr
