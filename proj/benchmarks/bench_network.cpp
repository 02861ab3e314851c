#include <benchmark/benchmark.h>

#include "plasticity/optim.hpp"
#include "plasticity/tasks.hpp"

namespace plasticity {
namespace {

MlpNetwork bench_net(std::size_t width) {
  const std::vector<std::size_t> widths{kBenchmarkInputDim, width, width, 1};
  return init_network(widths, Activation::kRelu, 1);
}

void BM_Forward(benchmark::State& state) {
  const auto net = bench_net(static_cast<std::size_t>(state.range(0)));
  const auto x = sample_inputs(benchmark_task(), static_cast<std::size_t>(state.range(1)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, x));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_Forward)->Args({64, 64})->Args({64, 1000})->Args({256, 1000});

void BM_ForwardBackward(benchmark::State& state) {
  const auto net = bench_net(static_cast<std::size_t>(state.range(0)));
  const auto d = generate_dataset(benchmark_task(), static_cast<std::size_t>(state.range(1)), 3);
  for (auto _ : state) {
    GradTape tape;
    const auto fwd = forward_on_tape(net, tape, d.inputs);
    tape.backward(mse_loss(fwd.output(), tape.constant(d.targets)));
    benchmark::DoNotOptimize(collect_grads(net, tape, fwd));
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_ForwardBackward)->Args({64, 64})->Args({64, 1000})->Args({256, 1000});

void BM_SgdStep(benchmark::State& state) {
  auto net = bench_net(256);
  const auto g = zero_grads(net);
  Optimizer opt(OptimizerConfig{});
  for (auto _ : state) step(net, opt, g);
}
BENCHMARK(BM_SgdStep);

}  // namespace
}  // namespace plasticity
