#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

// Compute kernels behind the differentiable ops. Every kernel has a plain
// serial reference in `serial` and an OpenMP version in `parallel`; the ops
// call the parallel ones and the tests compare the two.
//
// All arrays are row-major and contiguous. Kernels accumulate (+=) into their
// outputs unless noted.
namespace sfit::kernels {

struct ConvGeometry {
  std::size_t batch = 0, in_channels = 0, height = 0, width = 0;
  std::size_t out_channels = 0, kernel_h = 0, kernel_w = 0;
  std::size_t stride = 1, padding = 0;
  std::size_t out_h = 0, out_w = 0;

  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
  std::size_t out_plane() const { return out_h * out_w; }
};

struct PoolGeometry {
  std::size_t planes = 0;  // batch * channels
  std::size_t height = 0, width = 0;
  std::size_t window = 2, stride = 2;
  std::size_t out_h = 0, out_w = 0;
};

namespace serial {

// c[m x n] += op(a) * op(b), op(a) is m x k, op(b) is k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c);

// y = conv(x, w) + bias; y is overwritten.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                           std::span<T> dx);

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                            std::span<T> dw, std::span<T> dbias);

// y is overwritten; argmax receives the flat input index of each window max,
// ties resolved to the lowest flat index.
template <typename T>
void maxpool_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y,
                     std::span<std::size_t> argmax);

}  // namespace serial

namespace parallel {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c);

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                           std::span<T> dx);

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                            std::span<T> dw, std::span<T> dbias);

template <typename T>
void maxpool_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y,
                     std::span<std::size_t> argmax);

}  // namespace parallel

// Scatter of pooled gradients back to the argmax positions.
template <typename T>
void maxpool_backward(std::span<const T> dy, std::span<const std::size_t> argmax, std::span<T> dx);

}  // namespace sfit::kernels
