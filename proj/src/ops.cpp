#include "sfit/ops.hpp"

#include <algorithm>
#include <cmath>

#include "sfit/errors.hpp"
#include "sfit/kernels.hpp"
#include "sfit/numeric.hpp"

namespace sfit {

namespace {

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const char* op) {
  require_finite<T>(values, op);
  return Tensor<T>(std::move(shape), std::move(values));
}

}  // namespace

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions differ: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  kernels::parallel::gemm<T>(false, false, m, n, k, a.values(), b.values(), out);
  auto result = make_result<T>({m, n}, std::move(out), "matmul");
  if (Tape<T>::any_requires_grad({&a, &b})) {
    tape.record({a.node(), b.node()}, result, [an = a.node(), bn = b.node(), rn = result.node(), m, n, k] {
      std::span<const T> g = rn->grad;
      if (an->requires_grad) {
        kernels::parallel::gemm<T>(false, true, m, k, n, g, *bn->data, an->ensure_grad());
      }
      if (bn->requires_grad) {
        kernels::parallel::gemm<T>(true, false, k, n, m, *an->data, g, bn->ensure_grad());
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> add_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& bias) {
  require_rank(x, 2, "add_bias");
  require_rank(bias, 1, "add_bias");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (bias.dim(0) != cols) throw DimensionError("add_bias: bias length does not match columns");
  std::vector<T> out(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bv[j];
  }
  auto result = make_result<T>(x.shape(), std::move(out), "add_bias");
  if (Tape<T>::any_requires_grad({&x, &bias})) {
    tape.record({x.node(), bias.node()}, result, [xn = x.node(), bn = bias.node(), rn = result.node(), rows, cols] {
      const auto& g = rn->grad;
      if (xn->requires_grad) {
        auto dx = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
      }
      if (bn->requires_grad) {
        auto db = bn->ensure_grad();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) db[j] += g[i * cols + j];
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto result = make_result<T>(a.shape(), std::move(out), "add");
  if (Tape<T>::any_requires_grad({&a, &b})) {
    tape.record({a.node(), b.node()}, result, [an = a.node(), bn = b.node(), rn = result.node()] {
      const auto& g = rn->grad;
      for (const auto& node : {an, bn}) {
        if (!node->requires_grad) continue;
        auto d = node->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto result = make_result<T>(a.shape(), std::move(out), "mul");
  if (Tape<T>::any_requires_grad({&a, &b})) {
    tape.record({a.node(), b.node()}, result, [an = a.node(), bn = b.node(), rn = result.node()] {
      const auto& g = rn->grad;
      if (an->requires_grad) {
        auto d = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (*bn->data)[i];
      }
      if (bn->requires_grad) {
        auto d = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (*an->data)[i];
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  auto result = make_result<T>(a.shape(), std::move(out), "scale");
  if (a.requires_grad()) {
    tape.record({a.node()}, result, [an = a.node(), rn = result.node(), factor] {
      auto d = an->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * rn->grad[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.values()) acc += v;
  auto result = make_result<T>({}, {acc}, "sum");
  if (a.requires_grad()) {
    tape.record({a.node()}, result, [an = a.node(), rn = result.node()] {
      const T g = rn->grad[0];
      for (auto& d : an->ensure_grad()) d += g;
    });
  }
  return result;
}

template <typename T>
Tensor<T> weighted_sum(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& weights) {
  require_same_shape(a, weights, "weighted_sum");
  T acc = 0;
  auto av = a.values();
  auto wv = weights.values();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * wv[i];
  auto result = make_result<T>({}, {acc}, "weighted_sum");
  if (a.requires_grad()) {
    tape.record({a.node()}, result, [an = a.node(), wn = weights.node(), rn = result.node()] {
      const T g = rn->grad[0];
      auto d = an->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * (*wn->data)[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape));
  }
  Tensor<T> result(std::move(shape), std::vector<T>(a.values().begin(), a.values().end()));
  if (a.requires_grad()) {
    tape.record({a.node()}, result, [an = a.node(), rn = result.node()] {
      auto d = an->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += rn->grad[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> flatten(Tape<T>& tape, const Tensor<T>& a) {
  if (a.rank() < 1) throw DimensionError("flatten needs a batch axis");
  const std::size_t batch = a.dim(0);
  if (a.rank() == 2) return a;
  return reshape(tape, a, Shape{batch, a.numel() / batch});
}

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 Conv2dParams params) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  if (params.stride == 0) throw DimensionError("conv2d stride must be positive");
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel_h = w.dim(2);
  g.kernel_w = w.dim(3);
  g.stride = params.stride;
  g.padding = params.padding;
  if (w.dim(1) != g.in_channels) throw DimensionError("conv2d channel mismatch");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.out_channels)) {
    throw DimensionError("conv2d bias must have one entry per filter");
  }
  const std::size_t span_h = g.height + 2 * g.padding;
  const std::size_t span_w = g.width + 2 * g.padding;
  if (g.kernel_h > span_h || g.kernel_w > span_w) throw DimensionError("conv2d kernel larger than padded input");
  if ((span_h - g.kernel_h) % g.stride != 0 || (span_w - g.kernel_w) % g.stride != 0) {
    throw DimensionError("conv2d output size is not integral");
  }
  g.out_h = (span_h - g.kernel_h) / g.stride + 1;
  g.out_w = (span_w - g.kernel_w) / g.stride + 1;

  std::vector<T> out(g.batch * g.out_channels * g.out_plane());
  std::span<const T> bias_values = bias.defined() ? bias.values() : std::span<const T>{};
  kernels::parallel::conv2d_forward<T>(g, x.values(), w.values(), bias_values, out);
  auto result = make_result<T>({g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out), "conv2d");

  const Tensor<T>* bias_ptr = bias.defined() ? &bias : nullptr;
  if (Tape<T>::any_requires_grad({&x, &w, bias_ptr})) {
    auto bn = bias.defined() ? bias.node() : nullptr;
    std::vector<typename Tape<T>::NodePtr> operands{x.node(), w.node()};
    if (bn) operands.push_back(bn);
    tape.record(std::move(operands), result, [xn = x.node(), wn = w.node(), bn, rn = result.node(), g] {
      std::span<const T> dy = rn->grad;
      if (xn->requires_grad) kernels::parallel::conv2d_backward_input<T>(g, dy, *wn->data, xn->ensure_grad());
      const bool want_w = wn->requires_grad;
      const bool want_b = bn && bn->requires_grad;
      if (want_w || want_b) {
        std::vector<T> scratch_w;
        std::span<T> dw;
        if (want_w) {
          dw = wn->ensure_grad();
        } else {
          scratch_w.assign(wn->data->size(), T(0));
          dw = scratch_w;
        }
        std::span<T> db = want_b ? bn->ensure_grad() : std::span<T>{};
        kernels::parallel::conv2d_backward_weight<T>(g, *xn->data, dy, dw, db);
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> maxpool2d(Tape<T>& tape, const Tensor<T>& x, std::size_t window, std::size_t stride) {
  require_rank(x, 4, "maxpool2d");
  if (window == 0 || stride == 0) throw DimensionError("maxpool2d window and stride must be positive");
  kernels::PoolGeometry g;
  g.planes = x.dim(0) * x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.window = window;
  g.stride = stride;
  if (window > g.height || window > g.width) throw DimensionError("maxpool2d window larger than input");
  if ((g.height - window) % stride != 0 || (g.width - window) % stride != 0) {
    throw DimensionError("maxpool2d input not divisible by stride");
  }
  g.out_h = (g.height - window) / stride + 1;
  g.out_w = (g.width - window) / stride + 1;

  std::vector<T> out(g.planes * g.out_h * g.out_w);
  std::vector<std::size_t> argmax(out.size());
  kernels::parallel::maxpool_forward<T>(g, x.values(), out, argmax);
  auto result = make_result<T>({x.dim(0), x.dim(1), g.out_h, g.out_w}, std::move(out), "maxpool2d");
  if (x.requires_grad()) {
    tape.record({x.node()}, result, [xn = x.node(), rn = result.node(), argmax = std::move(argmax)] {
      kernels::maxpool_backward<T>(rn->grad, argmax, xn->ensure_grad());
    });
  }
  return result;
}

template <typename T>
Tensor<T> pad2d(Tape<T>& tape, const Tensor<T>& x, std::size_t pad) {
  require_rank(x, 4, "pad2d");
  if (pad == 0) return x;
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h + 2 * pad, ow = w + 2 * pad;
  std::vector<T> out(planes * oh * ow, T(0));
  auto xv = x.values();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < h; ++i) {
      std::copy_n(xv.begin() + (p * h + i) * w, w, out.begin() + (p * oh + i + pad) * ow + pad);
    }
  }
  Tensor<T> result({x.dim(0), x.dim(1), oh, ow}, std::move(out));
  if (x.requires_grad()) {
    tape.record({x.node()}, result, [xn = x.node(), rn = result.node(), planes, h, w, oh, ow, pad] {
      auto d = xn->ensure_grad();
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < h; ++i) {
          for (std::size_t j = 0; j < w; ++j) d[(p * h + i) * w + j] += rn->grad[(p * oh + i + pad) * ow + j + pad];
        }
      }
    });
  }
  return result;
}

namespace {

struct BnLayout {
  std::size_t batch, channels, plane;
  std::size_t index(std::size_t b, std::size_t c, std::size_t p) const { return (b * channels + c) * plane + p; }
};

template <typename T>
BnLayout bn_layout(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  require_rank(x, 4, "batchnorm");
  BnLayout l{x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  if (gamma.numel() != l.channels || beta.numel() != l.channels) {
    throw DimensionError("batchnorm gamma/beta must have one entry per channel");
  }
  return l;
}

// y = gamma * (x - mean) * inv_std + beta; records the adjoint for either the
// batch-statistics path (training) or the fixed-statistics path (eval).
template <typename T>
Tensor<T> batchnorm_apply(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const BnLayout& l, std::vector<T> mean, std::vector<T> inv_std, bool batch_stats) {
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  const auto channels = static_cast<std::ptrdiff_t>(l.channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t cc = 0; cc < channels; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    for (std::size_t b = 0; b < l.batch; ++b) {
      for (std::size_t p = 0; p < l.plane; ++p) {
        const auto i = l.index(b, c, p);
        xhat[i] = (xv[i] - mean[c]) * inv_std[c];
        out[i] = gv[c] * xhat[i] + bv[c];
      }
    }
  }
  auto result = make_result<T>(x.shape(), std::move(out), "batchnorm");
  if (Tape<T>::any_requires_grad({&x, &gamma, &beta})) {
    tape.record({x.node(), gamma.node(), beta.node()}, result,
                [xn = x.node(), gn = gamma.node(), bn = beta.node(), rn = result.node(), l,
                 xhat = std::move(xhat), inv_std = std::move(inv_std), batch_stats] {
                  const auto& dy = rn->grad;
                  const auto n = static_cast<T>(l.batch * l.plane);
                  std::span<T> dx = xn->requires_grad ? xn->ensure_grad() : std::span<T>{};
                  std::span<T> dg = gn->requires_grad ? gn->ensure_grad() : std::span<T>{};
                  std::span<T> db = bn->requires_grad ? bn->ensure_grad() : std::span<T>{};
                  for (std::size_t c = 0; c < l.channels; ++c) {
                    T sum_dy = 0, sum_dy_xhat = 0;
                    for (std::size_t b = 0; b < l.batch; ++b) {
                      for (std::size_t p = 0; p < l.plane; ++p) {
                        const auto i = l.index(b, c, p);
                        sum_dy += dy[i];
                        sum_dy_xhat += dy[i] * xhat[i];
                      }
                    }
                    if (!dg.empty()) dg[c] += sum_dy_xhat;
                    if (!db.empty()) db[c] += sum_dy;
                    if (dx.empty()) continue;
                    const T k = (*gn->data)[c] * inv_std[c];
                    for (std::size_t b = 0; b < l.batch; ++b) {
                      for (std::size_t p = 0; p < l.plane; ++p) {
                        const auto i = l.index(b, c, p);
                        dx[i] += batch_stats ? k * (dy[i] - sum_dy / n - xhat[i] * sum_dy_xhat / n) : k * dy[i];
                      }
                    }
                  }
                });
  }
  return result;
}

}  // namespace

template <typename T>
Tensor<T> batchnorm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    BatchNormStats<T>* stats, bool training, BatchNormParams params) {
  if (!training) {
    if (stats == nullptr) throw UsageError("batchnorm in eval mode needs running statistics");
    return batchnorm_eval(tape, x, gamma, beta, *stats, params);
  }
  const auto l = bn_layout(x, gamma, beta);
  if (l.batch < 2) throw StatisticsError("batchnorm training mode needs a batch of at least 2");
  const std::size_t count = l.batch * l.plane;
  auto xv = x.values();
  std::vector<T> mean(l.channels, T(0)), var(l.channels, T(0)), inv_std(l.channels);
  for (std::size_t c = 0; c < l.channels; ++c) {
    T acc = 0;
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t p = 0; p < l.plane; ++p) acc += xv[l.index(b, c, p)];
    mean[c] = acc / static_cast<T>(count);
    T sq = 0;
    for (std::size_t b = 0; b < l.batch; ++b)
      for (std::size_t p = 0; p < l.plane; ++p) {
        const T d = xv[l.index(b, c, p)] - mean[c];
        sq += d * d;
      }
    var[c] = sq / static_cast<T>(count);
    inv_std[c] = T(1) / std::sqrt(var[c] + static_cast<T>(params.eps));
  }
  if (stats != nullptr) {
    auto rm = stats->running_mean.mutable_values();
    auto rv = stats->running_var.mutable_values();
    if (rm.size() != l.channels || rv.size() != l.channels) throw DimensionError("batchnorm running stats size");
    const auto m = static_cast<T>(params.momentum);
    const T unbiased = static_cast<T>(count) / static_cast<T>(count - 1);
    for (std::size_t c = 0; c < l.channels; ++c) {
      rm[c] = (T(1) - m) * rm[c] + m * mean[c];
      rv[c] = (T(1) - m) * rv[c] + m * var[c] * unbiased;
    }
  }
  return batchnorm_apply(tape, x, gamma, beta, l, std::move(mean), std::move(inv_std), true);
}

template <typename T>
Tensor<T> batchnorm_eval(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         const BatchNormStats<T>& stats, BatchNormParams params) {
  const auto l = bn_layout(x, gamma, beta);
  auto rm = stats.running_mean.values();
  auto rv = stats.running_var.values();
  if (rm.size() != l.channels || rv.size() != l.channels) throw DimensionError("batchnorm running stats size");
  std::vector<T> mean(rm.begin(), rm.end());
  std::vector<T> inv_std(l.channels);
  for (std::size_t c = 0; c < l.channels; ++c) inv_std[c] = T(1) / std::sqrt(rv[c] + static_cast<T>(params.eps));
  return batchnorm_apply(tape, x, gamma, beta, l, std::move(mean), std::move(inv_std), false);
}

template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& x, T slope) {
  std::vector<T> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = v > T(0) ? v : slope * v;
  auto result = make_result<T>(x.shape(), std::move(out), "leaky_relu");
  if (x.requires_grad()) {
    tape.record({x.node()}, result, [xn = x.node(), rn = result.node(), slope] {
      auto d = xn->ensure_grad();
      const auto& xv = *xn->data;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += rn->grad[i] * (xv[i] > T(0) ? T(1) : slope);
    });
  }
  return result;
}

template <typename T>
Tensor<T> log_sum_exp(Tape<T>& tape, const Tensor<T>& z) {
  if (z.rank() < 1) throw DimensionError("log_sum_exp needs at least one axis");
  const std::size_t k = z.shape().back();
  const std::size_t rows = z.numel() / k;
  Shape out_shape(z.shape().begin(), z.shape().end() - 1);
  auto zv = z.values();
  std::vector<T> out(rows);
  std::vector<T> softmax(z.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = zv.data() + r * k;
    const T m = *std::max_element(row, row + k);
    T s = 0;
    for (std::size_t j = 0; j < k; ++j) {
      softmax[r * k + j] = flush_exp(row[j] - m);
      s += softmax[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) softmax[r * k + j] /= s;
    out[r] = m + std::log(s);
  }
  auto result = make_result<T>(std::move(out_shape), std::move(out), "log_sum_exp");
  if (z.requires_grad()) {
    tape.record({z.node()}, result, [zn = z.node(), rn = result.node(), softmax = std::move(softmax), k] {
      auto d = zn->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += rn->grad[i / k] * softmax[i];
    });
  }
  return result;
}

#define SFIT_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> matmul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> add_bias(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                               \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                    \
  template Tensor<T> weighted_sum(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);                                         \
  template Tensor<T> flatten(Tape<T>&, const Tensor<T>&);                                                \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dParams); \
  template Tensor<T> maxpool2d(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);                    \
  template Tensor<T> pad2d(Tape<T>&, const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> batchnorm(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                               BatchNormStats<T>*, bool, BatchNormParams);                               \
  template Tensor<T> batchnorm_eval(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                    const BatchNormStats<T>&, BatchNormParams);                          \
  template Tensor<T> leaky_relu(Tape<T>&, const Tensor<T>&, T);                                          \
  template Tensor<T> log_sum_exp(Tape<T>&, const Tensor<T>&);

SFIT_INSTANTIATE_OPS(float)
SFIT_INSTANTIATE_OPS(double)

#undef SFIT_INSTANTIATE_OPS

}  // namespace sfit
