// Parallel kernels against their serial references.

#include "copbal/cop.hpp"
#include "copbal/harness.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace copbal;

namespace {

TrialConfig sweep_config() {
  TrialConfig c;
  c.trials = 6;
  c.seed = 1;
  return c;
}

void BM_SweepParallel(benchmark::State& state) {
  const auto grid = kp_grid();
  const auto config = sweep_config();
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_sweep(grid, config));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(grid.size()) * config.trials);
}

void BM_SweepSerial(benchmark::State& state) {
  const auto grid = kp_grid();
  const auto config = sweep_config();
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_sweep_serial(grid, config));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(grid.size()) * config.trials);
}

struct CopData {
  std::vector<FootCopSample> left, right;
  std::vector<RobotCop> out;

  explicit CopData(std::size_t n) : left(n), right(n), out(n) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 800.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::array<double, 4> a{u(rng), u(rng), u(rng), u(rng)};
      const std::array<double, 4> b{u(rng), u(rng), u(rng), u(rng)};
      left[i] = foot_cop(a);
      right[i] = foot_cop(b);
    }
  }
};

void BM_CopBatchParallel(benchmark::State& state) {
  CopData d(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    robot_cop_batch(d.left, d.right, d.out);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_CopBatchSerial(benchmark::State& state) {
  CopData d(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    robot_cop_batch_serial(d.left, d.right, d.out);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

} // namespace

BENCHMARK(BM_SweepParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SweepSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CopBatchParallel)->Arg(1 << 16)->Arg(1 << 20)->UseRealTime();
BENCHMARK(BM_CopBatchSerial)->Arg(1 << 16)->Arg(1 << 20)->UseRealTime();

BENCHMARK_MAIN();
