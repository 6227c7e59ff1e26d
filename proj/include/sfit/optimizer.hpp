#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sfit/model.hpp"
#include "sfit/tensor.hpp"

namespace sfit {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates, one buffer per parameter tensor.
template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  static AdamState for_parameters(std::span<const NamedTensor<T>> params);
};

// Bias-corrected Adam update of one buffer at time step `t` (1-based).
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t t,
                 const AdamOptions& options);

// One Adam step on every parameter using its accumulated gradient.
template <typename T>
void adam_step(std::span<const NamedTensor<T>> params, AdamState<T>& state, const AdamOptions& options);

}  // namespace sfit
