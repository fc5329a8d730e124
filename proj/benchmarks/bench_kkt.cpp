#include <benchmark/benchmark.h>

#include "densedrive/planner.hpp"
#include "densedrive/projection.hpp"
#include "densedrive/rng.hpp"

using namespace densedrive;

static void BM_prefactor(benchmark::State& state) {
  const auto basis = build_basis(10, TimeGrid{0.0, 10.0, 100});
  const Planner planner(basis, 4, PlannerWeights{}, TerminalMode::kAccelZero);
  SceneGeometry g;
  for (auto _ : state) {
    ProjectionSolver solver(basis, static_cast<int>(state.range(0)),
                            g.ellipse_a, g.ellipse_b, planner.A());
    benchmark::DoNotOptimize(solver.factor().n_total());
  }
}
BENCHMARK(BM_prefactor)->Arg(0)->Arg(10);

static void BM_kkt_solve(benchmark::State& state) {
  const auto basis = build_basis(10, TimeGrid{0.0, 10.0, 100});
  const Planner planner(basis, 4, PlannerWeights{}, TerminalMode::kAccelZero);
  rng::Engine eng(1);
  Eigen::VectorXd eta(planner.factor().n_total());
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = eng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(planner.factor().solve(eta));
  }
}
BENCHMARK(BM_kkt_solve);

static void BM_plan_batch(benchmark::State& state) {
  const auto basis = build_basis(10, TimeGrid{0.0, 10.0, 100});
  const Planner planner(basis, 4, PlannerWeights{}, TerminalMode::kAccelZero);
  BoundaryConditions bc;
  bc.b0 << 0, 2, 5, 0, 0, 0;
  rng::Engine eng(2);
  std::vector<BehavioralInput> batch;
  for (int j = 0; j < state.range(0); ++j) {
    BehavioralInput p;
    p.y_d = Eigen::VectorXd::Constant(4, eng.uniform(-2.0, 6.0));
    p.v_d = Eigen::VectorXd::Constant(4, eng.uniform(1.0, 10.0));
    batch.push_back(std::move(p));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(planner.plan_batch(batch, bc));
  }
}
BENCHMARK(BM_plan_batch)->Arg(16)->Arg(400);
