// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sfit/kernels.hpp"

using namespace sfit::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0f);
    if constexpr (Parallel) {
      parallel::gemm<float>(false, false, n, n, n, a, b, c);
    } else {
      serial::gemm<float>(false, false, n, n, n, a, b, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}

// First MiddleCNN block on a CIFAR-sized batch; range(0) is the batch size.
ConvGeometry block1(std::size_t batch) {
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = 3;
  g.height = g.width = 32;
  g.out_channels = 64;
  g.kernel_h = g.kernel_w = 3;
  g.stride = 1;
  g.padding = 1;
  g.out_h = g.out_w = 32;
  return g;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto g = block1(static_cast<std::size_t>(state.range(0)));
  const auto x = random_vec(g.batch * 3 * 32 * 32, 3), w = random_vec(64 * g.patch_size(), 4);
  const auto bias = random_vec(64, 5);
  std::vector<float> y(g.batch * 64 * g.out_plane());
  for (auto _ : state) {
    if constexpr (Parallel) {
      parallel::conv2d_forward<float>(g, x, w, bias, y);
    } else {
      serial::conv2d_forward<float>(g, x, w, bias, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_ConvBackwardWeight(benchmark::State& state) {
  const auto g = block1(static_cast<std::size_t>(state.range(0)));
  const auto x = random_vec(g.batch * 3 * 32 * 32, 6), dy = random_vec(g.batch * 64 * g.out_plane(), 7);
  std::vector<float> dw(64 * g.patch_size()), db(64);
  for (auto _ : state) {
    std::fill(dw.begin(), dw.end(), 0.0f);
    std::fill(db.begin(), db.end(), 0.0f);
    if constexpr (Parallel) {
      parallel::conv2d_backward_weight<float>(g, x, dy, dw, db);
    } else {
      serial::conv2d_backward_weight<float>(g, x, dy, dw, db);
    }
    benchmark::DoNotOptimize(dw.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Arg(8)->Arg(32);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Arg(8)->Arg(32);
BENCHMARK(BM_ConvBackwardWeight<false>)->Name("conv_backward_weight/serial")->Arg(8)->Arg(32);
BENCHMARK(BM_ConvBackwardWeight<true>)->Name("conv_backward_weight/parallel")->Arg(8)->Arg(32);

BENCHMARK_MAIN();
