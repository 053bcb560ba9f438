#include <benchmark/benchmark.h>

#include <vector>

#include "tfn/kernels.hpp"
#include "tfn/layers.hpp"
#include "tfn/rng.hpp"

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  tfn::Rng rng(seed);
  std::vector<float> v(n);
  for (auto &x : v)
    x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

// Args: m, k, n
void BM_GemmNN(benchmark::State &state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    tfn::kernels::gemm_nn<float>(a, b, c, m, k, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(
      2.0 * static_cast<double>(m * k * n), benchmark::Counter::kIsIterationInvariantRate,
      benchmark::Counter::kIs1000);
}
BENCHMARK(BM_GemmNN)
    ->Args({1024, 1176, 4})   // 7x7 attention branch, 24 channels
    ->Args({1024, 147, 8})    // 7x7 stem branch
    ->Args({1024, 108, 1})    // attention fuse conv
    ->Args({256, 216, 16})    // desk block 2
    ->Args({3136, 1152, 256}) // full-size block 5 at 14x14, batch 16
    ->Unit(benchmark::kMicrosecond);

void BM_GemmTN(benchmark::State &state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_vec(m * k, 1), b = random_vec(m * n, 2);
  std::vector<float> c(k * n);
  for (auto _ : state) {
    tfn::kernels::gemm_tn<float>(a, b, c, m, k, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(
      2.0 * static_cast<double>(m * k * n), benchmark::Counter::kIsIterationInvariantRate,
      benchmark::Counter::kIs1000);
}
BENCHMARK(BM_GemmTN)
    ->Args({1024, 1176, 4})
    ->Args({1024, 147, 8})
    ->Args({256, 216, 16})
    ->Args({3136, 1152, 256})
    ->Unit(benchmark::kMicrosecond);

void BM_GemmNT(benchmark::State &state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto a = random_vec(m * n, 1), b = random_vec(k * n, 2);
  std::vector<float> c(m * k);
  for (auto _ : state) {
    tfn::kernels::gemm_nt<float>(a, b, c, m, n, k, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(
      2.0 * static_cast<double>(m * k * n), benchmark::Counter::kIsIterationInvariantRate,
      benchmark::Counter::kIs1000);
}
BENCHMARK(BM_GemmNT)
    ->Args({1024, 4, 1176})
    ->Args({256, 16, 216})
    ->Args({3136, 256, 1152})
    ->Unit(benchmark::kMicrosecond);

void BM_Im2col(benchmark::State &state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const tfn::Shape4 in{16, 32, 32, 24};
  const auto x = random_vec(in.size(), 3);
  const tfn::ConvGeometry g{k, k, 1, (k - 1) / 2};
  const std::size_t rows = 1024;
  std::vector<float> cols(rows * k * k * in.c);
  for (auto _ : state) {
    tfn::im2col_rows<float>(x, in, g, 0, cols);
    benchmark::DoNotOptimize(cols.data());
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * cols.size() * 4));
}
BENCHMARK(BM_Im2col)->Arg(3)->Arg(7)->Unit(benchmark::kMicrosecond);

// Args: batch, size, cin, cout, kernel
void BM_Conv2DTrainStep(benchmark::State &state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const auto cin = static_cast<std::size_t>(state.range(2));
  const auto cout = static_cast<std::size_t>(state.range(3));
  const auto k = static_cast<std::size_t>(state.range(4));
  auto conv = tfn::Conv2D<float>::same(k, cin, cout);
  tfn::Rng rng(4);
  conv.initialize(rng);
  const tfn::TensorF x({n, hw, hw, cin}, random_vec(n * hw * hw * cin, 5));
  const tfn::TensorF g({n, hw, hw, cout}, random_vec(n * hw * hw * cout, 6));
  for (auto _ : state) {
    auto y = conv.forward(x, tfn::Mode::Train);
    auto dx = conv.backward(g);
    benchmark::DoNotOptimize(dx.data().data());
  }
}
BENCHMARK(BM_Conv2DTrainStep)
    ->Args({16, 32, 24, 4, 7})
    ->Args({16, 32, 3, 8, 5})
    ->Args({16, 16, 24, 16, 3})
    ->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
