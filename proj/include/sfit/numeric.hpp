#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "sfit/errors.hpp"

namespace sfit {

// exp() whose results below the smallest normal value are flushed to zero.
// This is the flush-to-zero behaviour of vectorized training kernels: in
// 32-bit, e^z is exactly 0 for z below about -87.3; in 64-bit, below -708.4.
template <typename T>
inline T flush_exp(T x) {
  const T r = std::exp(x);
  return r < std::numeric_limits<T>::min() ? T(0) : r;
}

// sign(0) == 0, and also for -0.0.
template <typename T>
inline T sign(T x) {
  return static_cast<T>((T(0) < x) - (x < T(0)));
}

template <typename T>
inline void require_finite(std::span<const T> values, const char* op) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

}  // namespace sfit
