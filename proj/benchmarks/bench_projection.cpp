#include <benchmark/benchmark.h>

#include "densedrive/planner.hpp"
#include "densedrive/projection.hpp"
#include "densedrive/rng.hpp"

using namespace densedrive;

namespace {

struct Fixture {
  BasisMatrices basis = build_basis(10, TimeGrid{0.0, 10.0, 100});
  SceneGeometry geom;
  SceneConstraints scene;
  Planner planner{basis, 4, PlannerWeights{}, TerminalMode::kAccelZero};
  ProjectionSolver solver;
  Eigen::VectorXd b_eq;
  std::vector<TrajectoryCoeffs> xi_star;
  std::vector<Eigen::VectorXd> b_batch;

  explicit Fixture(int n_obs, int batch) :
      geom([&] {
        SceneGeometry g;
        g.y_lb = -2.0;
        g.y_ub = 10.0;
        for (int i = 0; i < n_obs; ++i) {
          ObstaclePath p;
          p.x = Eigen::VectorXd::Constant(100, 35.0 + 30.0 * i);
          p.y = Eigen::VectorXd::Constant(100, 4.0);
          g.obstacles.push_back(std::move(p));
        }
        return g;
      }()),
      scene(reformulate_constraints(geom, basis, false)),
      solver(scene, planner.A()) {
    BoundaryConditions bc;
    bc.b0 << 0, 4, 5, 0, 0, 0;
    b_eq = equality_rhs(BehavioralInput{}, bc, basis);
    rng::Engine eng(7);
    for (int j = 0; j < batch; ++j) {
      BehavioralInput p;
      p.y_d = Eigen::VectorXd::Constant(4, eng.uniform(-2.0, 10.0));
      p.v_d = Eigen::VectorXd::Constant(4, eng.uniform(0.1, 10.0));
      xi_star.push_back(planner.plan(p, bc));
      b_batch.push_back(b_eq);
    }
  }
};

}  // namespace

static void BM_project_batch(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  ProjectionSolver::Options opts;
  opts.max_iters = 25;
  opts.record_trace = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        f.solver.project(f.xi_star, f.b_batch, f.scene, {}, {}, opts));
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_project_batch)->Args({4, 16})->Args({10, 16})->Args({4, 400})
    ->Unit(benchmark::kMillisecond);

static void BM_h_update(benchmark::State& state) {
  Fixture f(10, 1);
  ProjectionState st;
  st.xi_bar = f.xi_star[0];
  st.lambda = Eigen::VectorXd::Zero(f.scene.n_xi);
  for (auto _ : state) {
    f.solver.h_update(st, f.scene);
    benchmark::DoNotOptimize(st.e);
  }
}
BENCHMARK(BM_h_update);
