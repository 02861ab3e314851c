#include <benchmark/benchmark.h>

#include <array>
#include <random>

#include "plasticity/ppo.hpp"

namespace plasticity {
namespace {

void BM_EnvEpisode(benchmark::State& state) {
  const ToyEnvConfig cfg;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto _ : state) {
    ToyEnvState s = env_reset(rng);
    double total = 0.0;
    for (bool done = false; !done;) {
      const std::array<double, 2> a{u(rng), u(rng)};
      const EnvStep e = env_step(s, a, cfg);
      total += e.reward;
      s = e.next;
      done = e.done;
    }
    benchmark::DoNotOptimize(total);
  }
  state.SetItemsProcessed(state.iterations() * cfg.horizon);
}
BENCHMARK(BM_EnvEpisode);

void BM_Gae(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> r(n, 1.0), v(n, 0.5);
  std::vector<std::uint8_t> d(n, 0);
  for (std::size_t i = 199; i < n; i += 200) d[i] = 1;
  for (auto _ : state) benchmark::DoNotOptimize(compute_gae(r, v, d, 0.0, 0.99, 0.95));
}
BENCHMARK(BM_Gae)->Arg(2048);

}  // namespace
}  // namespace plasticity
