#include <benchmark/benchmark.h>

#include "tmf/cost.hpp"
#include "tmf/data.hpp"
#include "tmf/network.hpp"
#include "tmf/training.hpp"

using namespace tmf;

namespace {

ArchConfig preset(int which) { return which == 0 ? ArchConfig::toy_tmfnet() : ArchConfig::toy_baseline(); }

// args: 0 toy TMFNet / 1 toy baseline, input extent
void BM_ToyForward(benchmark::State& state) {
  const Network<float> net(preset(static_cast<int>(state.range(0))), 1);
  const int n = static_cast<int>(state.range(1));
  const auto sample = make_toy_sample(3, 0, ToyDataConfig{n});
  const Tensor image = to_tensor(sample.composite), tri = one_hot_trimap(sample.trimap);
  for (auto _ : state) {
    NoGradGuard<float> guard;
    benchmark::DoNotOptimize(net.forward(image, tri));
  }
  state.SetLabel(state.range(0) == 0 ? "tmp+glf" : "ppm+static");
}
BENCHMARK(BM_ToyForward)->Args({0, 128})->Args({1, 128})->Args({0, 256})->Args({1, 256})->Unit(benchmark::kMillisecond);

// One optimisation step: batch 2, 96 px crops.
void BM_ToyTrainStep(benchmark::State& state) {
  const auto samples = make_toy_dataset(8, 11);
  Network<float> net(preset(static_cast<int>(state.range(0))), 1);
  TrainConfig tc;
  tc.iterations = 1;
  tc.batch_size = 2;
  tc.crop_size = 96;
  for (auto _ : state) benchmark::DoNotOptimize(train(net, samples, tc));
  state.SetLabel(state.range(0) == 0 ? "tmp+glf" : "ppm+static");
}
BENCHMARK(BM_ToyTrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CountFlopsPaperShape(benchmark::State& state) {
  const Network<float> net(ArchConfig::tmfnet(), 1);
  for (auto _ : state) benchmark::DoNotOptimize(count_flops(net, 2048, 2048));
}
BENCHMARK(BM_CountFlopsPaperShape)->Unit(benchmark::kMillisecond);

}  // namespace
