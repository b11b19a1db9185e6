// Parallel kernels vs the serial reference on the shapes the default model runs.
//
//   ./build/bench/bench_kernels --benchmark_filter=conv

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "scalenet/kernels.hpp"

using namespace scalenet::nn;

namespace {

std::vector<float> noise(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

struct ConvCase {
  Conv2dShape s;
  std::vector<float> x, w, b, y, dy, dx, dw, db;
};

// args: batch, in channels, side, out channels, kernel, stride, dilation
ConvCase make_conv(const benchmark::State& st) {
  const auto n = st.range(0), c = st.range(1), hw = st.range(2), o = st.range(3), k = st.range(4);
  const int stride = static_cast<int>(st.range(5)), dil = static_cast<int>(st.range(6));
  ConvCase cc;
  cc.s = conv2d_shape({std::size_t(n), std::size_t(c), std::size_t(hw), std::size_t(hw)},
                      {std::size_t(o), std::size_t(c), std::size_t(k), std::size_t(k)},
                      {stride, int(dil * (k / 2)), dil});
  const std::size_t xs = n * c * hw * hw, ys = n * o * cc.s.out_pixels(), ws = o * c * k * k;
  cc.x = noise(xs, 1);
  cc.w = noise(ws, 2);
  cc.b = noise(o, 3);
  cc.y.resize(ys);
  cc.dy = noise(ys, 4);
  cc.dx.resize(xs);
  cc.dw.resize(ws);
  cc.db.resize(o);
  return cc;
}

template <bool Parallel>
void BM_conv_forward(benchmark::State& st) {
  auto cc = make_conv(st);
  for (auto _ : st) {
    if constexpr (Parallel) {
      kernels::conv2d_forward(cc.x.data(), cc.w.data(), cc.b.data(), cc.y.data(), cc.s);
    } else {
      reference::conv2d_forward(cc.x.data(), cc.w.data(), cc.b.data(), cc.y.data(), cc.s);
    }
    benchmark::DoNotOptimize(cc.y.data());
  }
  st.SetItemsProcessed(st.iterations() * 2 * cc.s.batch * cc.s.out_channels * cc.s.out_pixels() *
                       cc.s.patch_size());
}

template <bool Parallel>
void BM_conv_backward(benchmark::State& st) {
  auto cc = make_conv(st);
  for (auto _ : st) {
    if constexpr (Parallel) {
      kernels::conv2d_backward(cc.x.data(), cc.w.data(), cc.dy.data(), cc.dx.data(), cc.dw.data(),
                               cc.db.data(), cc.s);
    } else {
      reference::conv2d_backward(cc.x.data(), cc.w.data(), cc.dy.data(), cc.dx.data(), cc.dw.data(),
                                 cc.db.data(), cc.s);
    }
    benchmark::DoNotOptimize(cc.dw.data());
  }
}

template <bool Parallel>
void BM_correlation(benchmark::State& st) {
  const std::size_t n = st.range(0), c = st.range(1), hw = st.range(2);
  const auto s = correlation_shape({n, c, hw, hw}, {n, c, hw, hw});
  const auto a = noise(n * c * hw * hw, 5), b = noise(n * c * hw * hw, 6);
  std::vector<float> out(n * s.positions() * s.positions());
  for (auto _ : st) {
    if constexpr (Parallel) {
      kernels::correlation_forward(a.data(), b.data(), out.data(), s);
    } else {
      reference::correlation_forward(a.data(), b.data(), out.data(), s);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

// backbone first block, last block, ASPP dilated, first reduction
void conv_shapes(benchmark::internal::Benchmark* b) {
  b->ArgNames({"n", "c", "hw", "o", "k", "s", "d"});
  b->Args({8, 1, 128, 16, 3, 1, 1});
  b->Args({8, 64, 32, 64, 3, 1, 1});
  b->Args({8, 64, 16, 64, 3, 1, 3});
  b->Args({8, 256, 16, 32, 3, 2, 1});
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_conv_forward<true>)->Name("conv_forward/parallel")->Apply(conv_shapes);
BENCHMARK(BM_conv_forward<false>)->Name("conv_forward/reference")->Apply(conv_shapes);
BENCHMARK(BM_conv_backward<true>)->Name("conv_backward/parallel")->Apply(conv_shapes);
BENCHMARK(BM_conv_backward<false>)->Name("conv_backward/reference")->Apply(conv_shapes);
BENCHMARK(BM_correlation<true>)->Name("correlation/parallel")->Args({8, 64, 16})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_correlation<false>)->Name("correlation/reference")->Args({8, 64, 16})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
