#include "sfit/losses.hpp"

#include <algorithm>
#include <cmath>

#include "sfit/errors.hpp"
#include "sfit/numeric.hpp"
#include "sfit/ops.hpp"

namespace sfit {

template <typename T>
LogitsBatch<T>::LogitsBatch(Tensor<T> z, std::vector<int> y) : logits(std::move(z)), labels(std::move(y)) {
  if (logits.rank() != 2) throw DimensionError("logits must be [B x K], got " + shape_to_string(logits.shape()));
  if (classes() < 2) throw DimensionError("logits need at least two classes");
  if (labels.size() != batch()) throw DimensionError("one label per logits row required");
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes()) {
      throw DimensionError("label " + std::to_string(label) + " outside [0, K)");
    }
  }
}

namespace {

template <typename T>
T reduction_factor(std::size_t batch, Reduction reduction) {
  return reduction == Reduction::kMean ? T(1) / static_cast<T>(batch) : T(1);
}

// Shifted softmax of one row; returns the log-sum-exp.
template <typename T>
T softmax_row(const T* z, std::size_t k, T* out) {
  const T m = *std::max_element(z, z + k);
  T s = 0;
  for (std::size_t j = 0; j < k; ++j) {
    out[j] = flush_exp(z[j] - m);
    s += out[j];
  }
  for (std::size_t j = 0; j < k; ++j) out[j] /= s;
  return m + std::log(s);
}

}  // namespace

template <typename T>
std::size_t runner_up(std::span<const T> row, int label) {
  std::size_t best = label == 0 ? 1 : 0;
  for (std::size_t j = best + 1; j < row.size(); ++j) {
    if (static_cast<int>(j) == label) continue;
    if (row[j] > row[best]) best = j;
  }
  return best;
}

template <typename T>
std::vector<T> ce_loss_naive(const LogitsBatch<T>& batch) {
  const std::size_t k = batch.classes();
  auto z = batch.logits.values();
  std::vector<T> out(batch.batch());
  for (std::size_t b = 0; b < out.size(); ++b) {
    T s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z[b * k + j]);
    out[b] = -z[b * k + batch.labels[b]] + std::log(s);
  }
  return out;
}

template <typename T>
std::vector<T> ce_per_example(const LogitsBatch<T>& batch) {
  const std::size_t k = batch.classes();
  auto z = batch.logits.values();
  std::vector<T> out(batch.batch());
  std::vector<T> p(k);
  for (std::size_t b = 0; b < out.size(); ++b) {
    const T lse = softmax_row(z.data() + b * k, k, p.data());
    out[b] = lse - z[b * k + batch.labels[b]];
  }
  return out;
}

template <typename T>
Tensor<T> ce_loss(Tape<T>& tape, const LogitsBatch<T>& batch, Reduction reduction) {
  const std::size_t n = batch.batch(), k = batch.classes();
  auto z = batch.logits.values();
  std::vector<T> softmax(n * k);
  T total = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const T lse = softmax_row(z.data() + b * k, k, softmax.data() + b * k);
    total += lse - z[b * k + batch.labels[b]];
  }
  const T factor = reduction_factor<T>(n, reduction);
  Tensor<T> result = Tensor<T>::scalar(total * factor);
  require_finite<T>(result.values(), "ce_loss");
  if (batch.logits.requires_grad()) {
    tape.record({batch.logits.node()}, result,
                [zn = batch.logits.node(), rn = result.node(), softmax = std::move(softmax), labels = batch.labels,
                 k, factor] {
                  const T g = rn->grad[0] * factor;
                  auto d = zn->ensure_grad();
                  for (std::size_t i = 0; i < d.size(); ++i) {
                    const T onehot = static_cast<int>(i % k) == labels[i / k] ? T(1) : T(0);
                    d[i] += g * (softmax[i] - onehot);
                  }
                });
  }
  return result;
}

template <typename T>
Tensor<T> ce_grad_logits(const LogitsBatch<T>& batch) {
  const std::size_t n = batch.batch(), k = batch.classes();
  auto z = batch.logits.values();
  std::vector<T> grad(n * k);
  for (std::size_t b = 0; b < n; ++b) {
    softmax_row(z.data() + b * k, k, grad.data() + b * k);
    grad[b * k + batch.labels[b]] -= T(1);
  }
  return Tensor<T>({n, k}, std::move(grad));
}

template <typename T>
std::vector<bool> is_gradient_vanished(const LogitsBatch<T>& batch) {
  const std::size_t n = batch.batch(), k = batch.classes();
  auto z = batch.logits.values();
  std::vector<bool> out(n);
  std::vector<T> p(k);
  for (std::size_t b = 0; b < n; ++b) {
    softmax_row(z.data() + b * k, k, p.data());
    const auto y = static_cast<std::size_t>(batch.labels[b]);
    bool vanished = true;
    for (std::size_t j = 0; j < k && vanished; ++j) {
      const T onehot = j == y ? T(1) : T(0);
      vanished = p[j] == onehot && p[j] - onehot == T(0);
    }
    out[b] = vanished;
  }
  return out;
}

template <typename T>
Tensor<T> mucs_loss(Tape<T>& tape, const LogitsBatch<T>& batch, Reduction reduction) {
  const std::size_t n = batch.batch(), k = batch.classes();
  auto z = batch.logits.values();
  std::vector<std::size_t> rivals(n);
  T total = 0;
  for (std::size_t b = 0; b < n; ++b) {
    rivals[b] = runner_up<T>(z.subspan(b * k, k), batch.labels[b]);
    total += z[b * k + rivals[b]] - z[b * k + batch.labels[b]];
  }
  const T factor = reduction_factor<T>(n, reduction);
  Tensor<T> result = Tensor<T>::scalar(total * factor);
  require_finite<T>(result.values(), "mucs_loss");
  if (batch.logits.requires_grad()) {
    tape.record({batch.logits.node()}, result,
                [zn = batch.logits.node(), rn = result.node(), rivals = std::move(rivals), labels = batch.labels, k,
                 factor] {
                  const T g = rn->grad[0] * factor;
                  auto d = zn->ensure_grad();
                  for (std::size_t b = 0; b < rivals.size(); ++b) {
                    d[b * k + rivals[b]] += g;
                    d[b * k + labels[b]] -= g;
                  }
                });
  }
  return result;
}

template <typename T>
Tensor<T> combined_loss(Tape<T>& tape, const LogitsBatch<T>& batch, T mucs_weight, Reduction reduction) {
  auto ce = ce_loss(tape, batch, reduction);
  auto mucs = mucs_loss(tape, batch, reduction);
  if (mucs_weight == T(1)) return add(tape, ce, mucs);
  return add(tape, ce, scale(tape, mucs, mucs_weight));
}

template <typename T>
Tensor<T> softmax_temperature(const Tensor<T>& logits, T temperature) {
  if (!(temperature > T(0))) throw ParameterError("temperature must be positive");
  if (logits.rank() != 2) throw DimensionError("softmax_temperature expects [B x K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<T> scaled(logits.values().begin(), logits.values().end());
  for (auto& v : scaled) v /= temperature;
  std::vector<T> out(n * k);
  for (std::size_t b = 0; b < n; ++b) softmax_row(scaled.data() + b * k, k, out.data() + b * k);
  return Tensor<T>({n, k}, std::move(out));
}

template <typename T>
Tensor<T> soft_label_ce(Tape<T>& tape, const Tensor<T>& logits, const Tensor<T>& targets, T temperature,
                        Reduction reduction) {
  if (!(temperature > T(0))) throw ParameterError("temperature must be positive");
  if (logits.rank() != 2 || targets.shape() != logits.shape()) {
    throw DimensionError("soft_label_ce needs logits and targets of equal [B x K] shape");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<T> scaled(logits.values().begin(), logits.values().end());
  for (auto& v : scaled) v /= temperature;
  auto t = targets.values();
  std::vector<T> softmax(n * k);
  T total = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const T lse = softmax_row(scaled.data() + b * k, k, softmax.data() + b * k);
    for (std::size_t j = 0; j < k; ++j) total += t[b * k + j] * (lse - scaled[b * k + j]);
  }
  const T factor = reduction_factor<T>(n, reduction);
  Tensor<T> result = Tensor<T>::scalar(total * factor);
  require_finite<T>(result.values(), "soft_label_ce");
  if (logits.requires_grad()) {
    tape.record({logits.node()}, result,
                [zn = logits.node(), tn = targets.node(), rn = result.node(), softmax = std::move(softmax),
                 factor, temperature] {
                  const T g = rn->grad[0] * factor / temperature;
                  auto d = zn->ensure_grad();
                  const auto& tv = *tn->data;
                  for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * (softmax[i] - tv[i]);
                });
  }
  return result;
}

#define SFIT_INSTANTIATE_LOSSES(T)                                                                     \
  template struct LogitsBatch<T>;                                                                      \
  template std::size_t runner_up<T>(std::span<const T>, int);                                         \
  template std::vector<T> ce_loss_naive(const LogitsBatch<T>&);                                        \
  template std::vector<T> ce_per_example(const LogitsBatch<T>&);                                       \
  template Tensor<T> ce_loss(Tape<T>&, const LogitsBatch<T>&, Reduction);                              \
  template Tensor<T> ce_grad_logits(const LogitsBatch<T>&);                                            \
  template std::vector<bool> is_gradient_vanished(const LogitsBatch<T>&);                              \
  template Tensor<T> mucs_loss(Tape<T>&, const LogitsBatch<T>&, Reduction);                            \
  template Tensor<T> combined_loss(Tape<T>&, const LogitsBatch<T>&, T, Reduction);                     \
  template Tensor<T> softmax_temperature(const Tensor<T>&, T);                                         \
  template Tensor<T> soft_label_ce(Tape<T>&, const Tensor<T>&, const Tensor<T>&, T, Reduction);

SFIT_INSTANTIATE_LOSSES(float)
SFIT_INSTANTIATE_LOSSES(double)

#undef SFIT_INSTANTIATE_LOSSES

}  // namespace sfit
