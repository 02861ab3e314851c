#include <benchmark/benchmark.h>

#include <random>

#include "plasticity/metrics.hpp"
#include "plasticity/tasks.hpp"

namespace plasticity {
namespace {

MlpNetwork bench_net(std::size_t width) {
  const std::vector<std::size_t> widths{kBenchmarkInputDim, width, width, 1};
  return init_network(widths, Activation::kRelu, 1);
}

void BM_Dormancy(benchmark::State& state) {
  const auto net = bench_net(static_cast<std::size_t>(state.range(0)));
  const auto x = sample_inputs(benchmark_task(), 256, 2);
  const auto h = forward(net, x).activations[1];
  for (auto _ : state) benchmark::DoNotOptimize(dormancy_index(h, 0.025, 1));
}
BENCHMARK(BM_Dormancy)->Arg(64)->Arg(256);

void BM_Magi(benchmark::State& state) {
  const auto net = bench_net(static_cast<std::size_t>(state.range(0)));
  const auto x = sample_inputs(benchmark_task(), 256, 2);
  for (auto _ : state) benchmark::DoNotOptimize(magi(net, x, 1, 1e-8));
}
BENCHMARK(BM_Magi)->Arg(64)->Arg(256);

void BM_SingularValues(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor m(Shape{n, n});
  for (auto& v : m.values()) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(singular_values(m));
}
BENCHMARK(BM_SingularValues)->Arg(32)->Arg(64)->Arg(128);

}  // namespace
}  // namespace plasticity
