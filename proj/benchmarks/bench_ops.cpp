#include <benchmark/benchmark.h>

#include "tmf/matting_ops.hpp"
#include "tmf/ops.hpp"

using namespace tmf;

namespace {

Tensor random(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<float> v(s.numel());
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor(s, std::move(v));
}

Tensor binary(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(s.numel());
  for (auto& x : v) x = rng.coin(0.6) ? 1.0f : 0.0f;
  return Tensor(s, std::move(v));
}

// args: extent, kernel
void BM_NbpDirect(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), k = static_cast<int>(state.range(1));
  const Tensor f = random(Shape{1, 32, n, n}, 1), m = binary(Shape{1, 1, n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nbp(f, m, k));
  state.SetItemsProcessed(state.iterations() * f.numel());
}
BENCHMARK(BM_NbpDirect)->Args({32, 5})->Args({32, 17})->Args({64, 31})->Unit(benchmark::kMicrosecond);

void BM_NbpFast(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), k = static_cast<int>(state.range(1));
  const Tensor f = random(Shape{1, 32, n, n}, 1), m = binary(Shape{1, 1, n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nbp_fast(f, m, k));
  state.SetItemsProcessed(state.iterations() * f.numel());
}
BENCHMARK(BM_NbpFast)->Args({32, 5})->Args({32, 17})->Args({64, 31})->Unit(benchmark::kMicrosecond);

// args: channels, extent, stride
void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  const int stride = static_cast<int>(state.range(2));
  const Tensor x = random(Shape{2, c, n, n}, 3), w = random(Shape{c, c, 3, 3}, 4, -0.1, 0.1);
  const Tensor b(Shape{1, c, 1, 1}, 0.0f);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, Conv2dOptions{stride, 1, 1}));
  state.counters["MAC/s"] = benchmark::Counter(
      static_cast<double>(state.iterations()) * 2 * c * c * 9 * (n / stride) * (n / stride),
      benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Conv3x3)->Args({16, 64, 1})->Args({32, 48, 1})->Args({64, 24, 2})->Unit(benchmark::kMicrosecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  Tensor x = random(Shape{2, c, n, n}, 3), w = random(Shape{c, c, 3, 3}, 4, -0.1, 0.1);
  Tensor b(Shape{1, c, 1, 1}, 0.0f);
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = sum(conv2d(x, w, b, Conv2dOptions{1, 1, 1}));
    tape.backward(loss);
    x.zero_grad();
    w.zero_grad();
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({16, 64})->Args({32, 48})->Unit(benchmark::kMicrosecond);

// args: groups, extent
void BM_SpatialFusion(benchmark::State& state) {
  const int g = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  const Tensor x = random(Shape{1, 32, n, n}, 5), k = random(Shape{1, g * 9, n, n}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(GlfBlock<float>::spatial_fusion(x, KernelField<float>{k, g}));
}
BENCHMARK(BM_SpatialFusion)->Args({2, 64})->Args({4, 64})->Args({8, 128})->Unit(benchmark::kMicrosecond);

void BM_BilinearUpsample(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor x = random(Shape{1, 32, n, n}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(bilinear_resize(x, 2 * n, 2 * n));
}
BENCHMARK(BM_BilinearUpsample)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace
