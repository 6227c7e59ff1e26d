#pragma once

#include <cstddef>

#include "sfit/tensor.hpp"

// Differentiable ops. Each op computes its value eagerly and, when any operand
// requires a gradient, records its adjoint on the tape. Forward outputs are
// checked for finiteness; overflow raises NumericError.
namespace sfit {

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

// x[B x N] + bias[N] broadcast over rows.
template <typename T>
Tensor<T> add_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a);

// Scalar sum of w * a over all elements; w is a constant of a's shape.
template <typename T>
Tensor<T> weighted_sum(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& weights);

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& a, Shape shape);

// [B x ...] -> [B x prod(...)]
template <typename T>
Tensor<T> flatten(Tape<T>& tape, const Tensor<T>& a);

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 1;
};

// Cross-correlation with zero padding. x[B x C x H x W], w[F x C x kh x kw],
// bias[F] (may be undefined).
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 Conv2dParams params = {});

template <typename T>
Tensor<T> maxpool2d(Tape<T>& tape, const Tensor<T>& x, std::size_t window = 2,
                    std::size_t stride = 2);

// Zero padding of the two spatial axes by `pad` on every side.
template <typename T>
Tensor<T> pad2d(Tape<T>& tape, const Tensor<T>& x, std::size_t pad);

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

struct BatchNormParams {
  double eps = 1e-5;
  double momentum = 0.1;
};

// Per-channel normalization of x[B x C x H x W]. In training mode the batch
// statistics are used and `stats` is updated with momentum (stats may be
// null); in eval mode `stats` supplies mean and variance.
template <typename T>
Tensor<T> batchnorm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, BatchNormStats<T>* stats, bool training,
                    BatchNormParams params = {});

template <typename T>
Tensor<T> batchnorm_eval(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                         const Tensor<T>& beta, const BatchNormStats<T>& stats,
                         BatchNormParams params = {});

template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& x, T slope = T(0.01));

// Reduces the last axis: m + ln(sum exp(z - m)), m = max z.
template <typename T>
Tensor<T> log_sum_exp(Tape<T>& tape, const Tensor<T>& z);

}  // namespace sfit
