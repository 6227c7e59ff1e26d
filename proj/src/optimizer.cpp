#include "sfit/optimizer.hpp"

#include <cmath>

#include "sfit/errors.hpp"

namespace sfit {

template <typename T>
AdamState<T> AdamState<T>::for_parameters(std::span<const NamedTensor<T>> params) {
  AdamState state;
  for (const auto& p : params) {
    state.m.emplace_back(p.tensor.numel(), T(0));
    state.v.emplace_back(p.tensor.numel(), T(0));
  }
  return state;
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t t,
                 const AdamOptions& o) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw UsageError("adam: state and gradient sizes must match the parameter");
  }
  if (t == 0) throw UsageError("adam: step counter is 1-based");
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T lr = static_cast<T>(o.learning_rate), eps = static_cast<T>(o.eps);
  const T inv_c1 = static_cast<T>(1.0 / c1), inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * grad[i];
    v[i] = b2 * v[i] + (T(1) - b2) * grad[i] * grad[i];
    const T m_hat = m[i] * inv_c1;
    const T denom = std::sqrt(v[i]) * inv_sqrt_c2 + eps;
    param[i] -= lr * m_hat / denom;
  }
}

template <typename T>
void adam_step(std::span<const NamedTensor<T>> params, AdamState<T>& state, const AdamOptions& options) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw UsageError("adam: optimizer state does not match the parameter list");
  }
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto tensor = params[i].tensor;
    adam_update<T>(tensor.mutable_values(), tensor.grad(), state.m[i], state.v[i], state.step, options);
  }
}

#define SFIT_INSTANTIATE_ADAM(T)                                                                                  \
  template struct AdamState<T>;                                                                                   \
  template void adam_update<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>, std::uint64_t,       \
                               const AdamOptions&);                                                               \
  template void adam_step<T>(std::span<const NamedTensor<T>>, AdamState<T>&, const AdamOptions&);

SFIT_INSTANTIATE_ADAM(float)
SFIT_INSTANTIATE_ADAM(double)

#undef SFIT_INSTANTIATE_ADAM

}  // namespace sfit
