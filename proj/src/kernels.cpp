#include "sfit/kernels.hpp"

#include <algorithm>
#include <vector>

namespace sfit::kernels {

namespace {

// Rows [row_begin, row_end) of c += op(a) * op(b). Each output row is produced
// with a fixed summation order, so row-partitioned parallel runs reproduce the
// single-threaded bytes regardless of the thread count.
template <typename T>
void gemm_rows(bool trans_a, bool trans_b, std::size_t row_begin, std::size_t row_end,
               std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    T* crow = c + i * n;
    if (!trans_b) {
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = trans_a ? a[p * m + i] : a[i * k + p];
        if (aip == T(0)) continue;
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T acc = 0;
        if (trans_a) {
          for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
        } else {
          const T* arow = a + i * k;
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        }
        crow[j] += acc;
      }
    }
  }
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        T* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * plane;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(g.height) &&
                                iw < static_cast<std::ptrdiff_t>(g.width);
            row[oh * g.out_w + ow] = inside ? x[(c * g.height + ih) * g.width + iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const T* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * plane;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) continue;
            dx[(c * g.height + ih) * g.width + iw] += row[oh * g.out_w + ow];
          }
        }
      }
    }
  }
}

template <typename T>
void pool_plane(const PoolGeometry& g, std::size_t plane, const T* x, T* y, std::size_t* argmax) {
  const std::size_t in_base = plane * g.height * g.width;
  const std::size_t out_base = plane * g.out_h * g.out_w;
  for (std::size_t oh = 0; oh < g.out_h; ++oh) {
    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
      std::size_t best = in_base + (oh * g.stride) * g.width + ow * g.stride;
      for (std::size_t i = 0; i < g.window; ++i) {
        for (std::size_t j = 0; j < g.window; ++j) {
          const std::size_t idx = in_base + (oh * g.stride + i) * g.width + ow * g.stride + j;
          if (x[idx] > x[best]) best = idx;
        }
      }
      y[out_base + oh * g.out_w + ow] = x[best];
      argmax[out_base + oh * g.out_w + ow] = best;
    }
  }
}

}  // namespace

namespace serial {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        const T bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] += acc;
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t f = 0; f < g.out_channels; ++f) {
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          T acc = bias.empty() ? T(0) : bias[f];
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
              for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                                static_cast<std::ptrdiff_t>(g.padding);
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                                static_cast<std::ptrdiff_t>(g.padding);
                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.height) ||
                    iw >= static_cast<std::ptrdiff_t>(g.width)) {
                  continue;
                }
                acc += x[((b * g.in_channels + c) * g.height + ih) * g.width + iw] *
                       w[((f * g.in_channels + c) * g.kernel_h + ki) * g.kernel_w + kj];
              }
            }
          }
          y[((b * g.out_channels + f) * g.out_h + oh) * g.out_w + ow] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                           std::span<T> dx) {
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t f = 0; f < g.out_channels; ++f) {
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          const T gy = dy[((b * g.out_channels + f) * g.out_h + oh) * g.out_w + ow];
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
              for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                                static_cast<std::ptrdiff_t>(g.padding);
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                                static_cast<std::ptrdiff_t>(g.padding);
                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.height) ||
                    iw >= static_cast<std::ptrdiff_t>(g.width)) {
                  continue;
                }
                dx[((b * g.in_channels + c) * g.height + ih) * g.width + iw] +=
                    gy * w[((f * g.in_channels + c) * g.kernel_h + ki) * g.kernel_w + kj];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                            std::span<T> dw, std::span<T> dbias) {
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t f = 0; f < g.out_channels; ++f) {
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          const T gy = dy[((b * g.out_channels + f) * g.out_h + oh) * g.out_w + ow];
          if (!dbias.empty()) dbias[f] += gy;
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
              for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                                static_cast<std::ptrdiff_t>(g.padding);
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                                static_cast<std::ptrdiff_t>(g.padding);
                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.height) ||
                    iw >= static_cast<std::ptrdiff_t>(g.width)) {
                  continue;
                }
                dw[((f * g.in_channels + c) * g.kernel_h + ki) * g.kernel_w + kj] +=
                    gy * x[((b * g.in_channels + c) * g.height + ih) * g.width + iw];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void maxpool_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y,
                     std::span<std::size_t> argmax) {
  for (std::size_t p = 0; p < g.planes; ++p) pool_plane(g, p, x.data(), y.data(), argmax.data());
}

}  // namespace serial

namespace parallel {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > 32768)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    gemm_rows(trans_a, trans_b, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1, m, n,
              k, a.data(), b.data(), c.data());
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  const std::size_t in_size = g.in_channels * g.height * g.width;
  const std::size_t out_size = g.out_channels * g.out_plane();
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel
  {
    std::vector<T> col(g.patch_size() * g.out_plane());
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < batch; ++b) {
      im2col(g, x.data() + b * in_size, col.data());
      T* yb = y.data() + b * out_size;
      for (std::size_t f = 0; f < g.out_channels; ++f) {
        std::fill_n(yb + f * g.out_plane(), g.out_plane(), bias.empty() ? T(0) : bias[f]);
      }
      gemm_rows(false, false, 0, g.out_channels, g.out_channels, g.out_plane(), g.patch_size(),
                w.data(), col.data(), yb);
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w,
                           std::span<T> dx) {
  const std::size_t in_size = g.in_channels * g.height * g.width;
  const std::size_t out_size = g.out_channels * g.out_plane();
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel
  {
    std::vector<T> dcol(g.patch_size() * g.out_plane());
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < batch; ++b) {
      std::fill(dcol.begin(), dcol.end(), T(0));
      gemm_rows(true, false, 0, g.patch_size(), g.patch_size(), g.out_plane(), g.out_channels,
                w.data(), dy.data() + b * out_size, dcol.data());
      col2im(g, dcol.data(), dx.data() + b * in_size);
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy,
                            std::span<T> dw, std::span<T> dbias) {
  const std::size_t in_size = g.in_channels * g.height * g.width;
  const std::size_t out_size = g.out_channels * g.out_plane();
  std::vector<T> col(g.patch_size() * g.out_plane());
  // Batch loop stays serial so the accumulation order into dw is fixed.
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(g, x.data() + b * in_size, col.data());
    const T* dyb = dy.data() + b * out_size;
    gemm<T>(false, true, g.out_channels, g.patch_size(), g.out_plane(),
            std::span<const T>(dyb, out_size), col, dw);
    if (!dbias.empty()) {
      for (std::size_t f = 0; f < g.out_channels; ++f) {
        const T* row = dyb + f * g.out_plane();
        T acc = 0;
        for (std::size_t p = 0; p < g.out_plane(); ++p) acc += row[p];
        dbias[f] += acc;
      }
    }
  }
}

template <typename T>
void maxpool_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y,
                     std::span<std::size_t> argmax) {
  const auto planes = static_cast<std::ptrdiff_t>(g.planes);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    pool_plane(g, static_cast<std::size_t>(p), x.data(), y.data(), argmax.data());
  }
}

}  // namespace parallel

template <typename T>
void maxpool_backward(std::span<const T> dy, std::span<const std::size_t> argmax, std::span<T> dx) {
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
}

#define SFIT_INSTANTIATE_KERNELS(T)                                                              \
  template void serial::gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t,              \
                                std::span<const T>, std::span<const T>, std::span<T>);          \
  template void parallel::gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t,            \
                                  std::span<const T>, std::span<const T>, std::span<T>);        \
  template void serial::conv2d_forward<T>(const ConvGeometry&, std::span<const T>,               \
                                          std::span<const T>, std::span<const T>, std::span<T>); \
  template void parallel::conv2d_forward<T>(const ConvGeometry&, std::span<const T>,             \
                                            std::span<const T>, std::span<const T>,              \
                                            std::span<T>);                                       \
  template void serial::conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>,        \
                                                 std::span<const T>, std::span<T>);              \
  template void parallel::conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>,      \
                                                   std::span<const T>, std::span<T>);            \
  template void serial::conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>,       \
                                                  std::span<const T>, std::span<T>,              \
                                                  std::span<T>);                                 \
  template void parallel::conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>,     \
                                                    std::span<const T>, std::span<T>,            \
                                                    std::span<T>);                               \
  template void serial::maxpool_forward<T>(const PoolGeometry&, std::span<const T>,              \
                                           std::span<T>, std::span<std::size_t>);                \
  template void parallel::maxpool_forward<T>(const PoolGeometry&, std::span<const T>,            \
                                             std::span<T>, std::span<std::size_t>);              \
  template void maxpool_backward<T>(std::span<const T>, std::span<const std::size_t>,            \
                                    std::span<T>);

SFIT_INSTANTIATE_KERNELS(float)
SFIT_INSTANTIATE_KERNELS(double)

#undef SFIT_INSTANTIATE_KERNELS

}  // namespace sfit::kernels
