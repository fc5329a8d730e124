#include <benchmark/benchmark.h>

#include "densedrive/harness.hpp"

using namespace densedrive;
using namespace densedrive::harness;

static void BM_mpc_step(benchmark::State& state) {
  HarnessConfig cfg;
  cfg.k_proj = static_cast<int>(state.range(0));
  sim::ScenarioConfig sc;
  sc.n_lanes = 2;
  sc.n_vehicles = 10;
  sc.seed = 3;
  PlannerResources res(cfg, sc);
  const auto sim_state = sim::spawn_scenario(sc);
  const Eigen::VectorXd obs = sim::observe(sim_state, sc);
  EpisodeScratch scratch;
  std::uint64_t cycle = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        mpc_step(PlannerKind::kGrid, obs, res, sc, scratch, cycle++));
  }
}
BENCHMARK(BM_mpc_step)->Arg(25)->Arg(75)->Unit(benchmark::kMillisecond);

static void BM_mppi_cycle(benchmark::State& state) {
  HarnessConfig cfg;
  sim::ScenarioConfig sc;
  sc.n_lanes = 2;
  sc.n_vehicles = 10;
  sc.seed = 3;
  PlannerResources res(cfg, sc);
  const auto sim_state = sim::spawn_scenario(sc);
  const Eigen::VectorXd obs = sim::observe(sim_state, sc);
  EpisodeScratch scratch;
  std::uint64_t cycle = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        mpc_step(PlannerKind::kMppi, obs, res, sc, scratch, cycle++));
  }
}
BENCHMARK(BM_mppi_cycle)->Unit(benchmark::kMillisecond);
