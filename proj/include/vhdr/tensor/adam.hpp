#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "vhdr/core/errors.hpp"
#include "vhdr/tensor/graph.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

struct AdamState {
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-4;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// One bias-corrected Adam update of every parameter in `params`.
///
/// The whole step is rejected (nothing is modified) if any gradient is
/// missing, mis-shaped or non-finite.
inline void adam_step(ParameterStore& params, const GradientMap& grads, AdamState& state) {
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw DataError("adam: no gradient for parameter '" + name + "'");
    if (it->second.shape() != p.shape()) {
      throw DataError("adam: gradient for '" + name + "' has shape " + shape_str(it->second.shape()) +
                      ", parameter has " + shape_str(p.shape()));
    }
    if (!it->second.all_finite()) throw NumericError("adam: non-finite gradient for parameter '" + name + "'");
  }

  const std::int64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, Tensor::zeros_like(p));
    auto [v_it, v_new] = state.second_moment.try_emplace(name, Tensor::zeros_like(p));
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    if (m.shape() != p.shape() || v.shape() != p.shape()) throw DataError("adam: moment shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = state.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + state.epsilon);
      p[i] = static_cast<float>(p[i] - update);
    }
  }
  state.step = t;
}

}  // namespace vhdr
