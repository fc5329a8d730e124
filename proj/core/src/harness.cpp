#include "densedrive/harness.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "densedrive/rng.hpp"

namespace densedrive::harness {

std::string to_string(PlannerKind kind) {
  switch (kind) {
    case PlannerKind::kGrid: return "grid";
    case PlannerKind::kSupervised: return "supervised";
    case PlannerKind::kSelfSupervised: return "self_supervised";
    case PlannerKind::kMppi: return "mppi";
  }
  return "unknown";
}

PlannerKind planner_kind_from_string(const std::string& name) {
  if (name == "grid") return PlannerKind::kGrid;
  if (name == "supervised") return PlannerKind::kSupervised;
  if (name == "self_supervised" || name == "self-supervised")
    return PlannerKind::kSelfSupervised;
  if (name == "mppi") return PlannerKind::kMppi;
  throw std::invalid_argument("unknown planner kind: " + name);
}

// ---------------------------------------------------------------------------
// PlannerResources
// ---------------------------------------------------------------------------

PlannerResources::PlannerResources(const HarnessConfig& cfg,
                                   const sim::ScenarioConfig& scenario)
    : cfg_(cfg), scenario_(scenario) {
  scenario_.validate();
  basis_ = build_basis(cfg.order, cfg.grid);
  planner_ = std::make_unique<Planner>(basis_, cfg.m_seg, cfg.weights,
                                       TerminalMode::kAccelZero);
  projection_ = std::make_unique<ProjectionSolver>(
      basis_, cfg.obstacle_slots, cfg.ellipse_a, cfg.ellipse_b, planner_->A(),
      cfg.rho);
  cfg_.metacost.v_des = scenario_.v_max;

  const Eigen::MatrixXd& A = planner_->A();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  const Eigen::MatrixXd kernel = lu.kernel();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(kernel);
  null_basis_ = qr.householderQ() *
                Eigen::MatrixXd::Identity(A.cols(), kernel.cols());
  pinv_bridge_ =
      A.transpose() * (A * A.transpose())
                          .ldlt()
                          .solve(Eigen::MatrixXd::Identity(A.rows(), A.rows()));
}

void PlannerResources::set_mlp(MlpPolicy policy, ObservationScaling scaling) {
  mlp_ = std::move(policy);
  scaling_ = scaling;
}

void PlannerResources::set_cvae(CvaePolicy policy, ObservationScaling scaling) {
  cvae_ = std::move(policy);
  scaling_ = scaling;
}

SceneConstraints PlannerResources::scene_of(const Eigen::VectorXd& obs,
                                            bool build_matrices) const {
  SceneGeometry g;
  g.obstacles = sim::pad_obstacles(sim::predict_obstacles(obs, cfg_.grid),
                                   cfg_.obstacle_slots, cfg_.grid);
  g.ellipse_a = cfg_.ellipse_a;
  g.ellipse_b = cfg_.ellipse_b;
  g.v_min = cfg_.v_min;
  g.v_max = scenario_.v_max;
  g.a_max = cfg_.a_max;
  g.y_lb = obs(53) + cfg_.lane_margin;
  g.y_ub = obs(54) - cfg_.lane_margin;
  return reformulate_constraints(g, basis_, build_matrices);
}

BoundaryConditions PlannerResources::bc_of(const Eigen::VectorXd& obs,
                                           const Eigen::Vector2d& accel) const {
  BoundaryConditions bc;
  bc.terminal_mode = TerminalMode::kAccelZero;
  bc.b0 << 0.0, 0.0, obs(2), obs(1), accel(0), accel(1);
  return bc;
}

BehaviorBounds PlannerResources::behavior_bounds(
    const SceneConstraints& scene) const {
  BehaviorBounds b;
  b.y_lo = scene.geom.y_lb;
  b.y_hi = scene.geom.y_ub;
  b.v_lo = scene.geom.v_min;
  b.v_hi = scene.geom.v_max;
  return b;
}

TrainEnv PlannerResources::train_env() const {
  TrainEnv env;
  env.planner = planner_.get();
  env.projection = projection_.get();
  env.scene_of = [this](const Eigen::VectorXd& o) { return scene_of(o); };
  env.bc_of = [this](const Eigen::VectorXd& o) { return bc_of(o); };
  env.scaling = scaling_;
  return env;
}

Eigen::VectorXd PlannerResources::particular_solution(
    const Eigen::VectorXd& b) const {
  return pinv_bridge_ * b;
}

// ---------------------------------------------------------------------------
// mpc_step
// ---------------------------------------------------------------------------

namespace {

std::vector<double> lane_centers_in_frame(const Eigen::VectorXd& obs,
                                          const sim::ScenarioConfig& sc) {
  std::vector<double> centers;
  centers.reserve(sc.n_lanes);
  for (int l = 0; l < sc.n_lanes; ++l)
    centers.push_back(obs(53) + sc.lane_center(l));
  return centers;
}

double nearest_lane_center(const std::vector<double>& centers) {
  double best = centers.front();
  for (const double c : centers)
    if (std::abs(c) < std::abs(best)) best = c;
  return best;
}

void clamp_batch(std::vector<BehavioralInput>& batch, const BehaviorBounds& bb,
                 int m_seg) {
  const Eigen::VectorXd lo = bb.lower(m_seg);
  const Eigen::VectorXd hi = bb.upper(m_seg);
  for (auto& p : batch)
    p = BehavioralInput::from_flat(p.flat().cwiseMax(lo).cwiseMin(hi).eval());
}

struct SampledBatch {
  std::vector<BehavioralInput> p;
  std::vector<Eigen::VectorXd> lambda;
};

SampledBatch sample_inputs(PlannerKind kind, const Eigen::VectorXd& obs,
                           const PlannerResources& res,
                           const sim::ScenarioConfig& scenario,
                           const SceneConstraints& scene,
                           std::uint64_t cycle_seed) {
  const auto& cfg = res.cfg();
  const int m_seg = cfg.m_seg;
  const int n_xi = res.planner().factor().n_primal();
  const BehaviorBounds bb = res.behavior_bounds(scene);
  SampledBatch out;

  switch (kind) {
    case PlannerKind::kGrid: {
      out.p = grid_sampler(cfg.grid_spec, lane_centers_in_frame(obs, scenario),
                           m_seg);
      clamp_batch(out.p, bb, m_seg);
      out.lambda.assign(out.p.size(), Eigen::VectorXd::Zero(n_xi));
      break;
    }
    case PlannerKind::kSelfSupervised: {
      if (!res.mlp())
        throw std::invalid_argument("mpc_step: MLP policy not loaded");
      const Eigen::VectorXd o_norm = normalize_observation(obs, res.scaling());
      const Eigen::VectorXd raw = res.mlp()->forward_value(o_norm);
      const Eigen::VectorXd mean_p =
          squash_value(raw.head(2 * m_seg), bb.lower(m_seg), bb.upper(m_seg));
      SamplingDistribution dist;
      dist.mean.resize(2 * m_seg + n_xi);
      dist.mean << mean_p, raw.segment(2 * m_seg, n_xi);
      dist.cov_diag.resize(dist.mean.size());
      dist.cov_diag.head(2 * m_seg).setConstant(cfg.policy_cov_p);
      dist.cov_diag.tail(n_xi).setConstant(cfg.policy_cov_lambda);
      const auto draws =
          gaussian_sampler(dist, cfg.n_samples, cycle_seed, bb, m_seg, n_xi);
      for (const auto& d : draws) {
        out.p.push_back(d.p);
        out.lambda.push_back(d.lambda_init);
      }
      break;
    }
    case PlannerKind::kSupervised: {
      if (!res.cvae())
        throw std::invalid_argument("mpc_step: CVAE policy not loaded");
      const auto& cvae = *res.cvae();
      const Eigen::VectorXd o_norm = normalize_observation(obs, res.scaling());
      rng::Engine eng(cycle_seed);
      for (int j = 0; j < cfg.n_samples; ++j) {
        Eigen::VectorXd zin(cvae.latent_dim + o_norm.size());
        for (int i = 0; i < cvae.latent_dim; ++i) zin(i) = eng.normal();
        zin.tail(o_norm.size()) = o_norm;
        const Eigen::VectorXd raw = cvae.decoder.forward_value(zin);
        out.p.push_back(BehavioralInput::from_flat(squash_value(
            raw.head(2 * m_seg), bb.lower(m_seg), bb.upper(m_seg))));
        out.lambda.push_back(raw.segment(2 * m_seg, n_xi));
      }
      break;
    }
    case PlannerKind::kMppi:
      throw std::logic_error("sample_inputs: mppi has no behavioral inputs");
  }
  return out;
}

StepResult mppi_step_cycle(const Eigen::VectorXd& obs,
                           const PlannerResources& res,
                           const sim::ScenarioConfig& scenario,
                           EpisodeScratch& scratch, std::uint64_t cycle_seed) {
  const auto& cfg = res.cfg();
  const SceneConstraints scene = res.scene_of(obs);
  const BoundaryConditions bc = res.bc_of(obs, scratch.last_accel);
  const Eigen::VectorXd b = equality_rhs(BehavioralInput{}, bc, res.basis());
  const Eigen::VectorXd xi_part = res.particular_solution(b);
  const Eigen::MatrixXd& N = res.null_basis();

  if (!scratch.mppi) {
    // first cycle: seed the distribution from the lane-keeping QP solution
    BehavioralInput p0;
    p0.y_d = Eigen::VectorXd::Constant(
        cfg.m_seg, nearest_lane_center(lane_centers_in_frame(obs, scenario)));
    p0.v_d = Eigen::VectorXd::Constant(cfg.m_seg, cfg.metacost.v_des);
    const TrajectoryCoeffs xi_qp = res.planner().plan(p0, bc);
    MppiState st;
    st.mean_controls = N.transpose() * (xi_qp - xi_part);
    st.cov_diag = Eigen::VectorXd::Constant(N.cols(), cfg.mppi_init_var);
    st.temperature = cfg.mppi_temperature;
    st.cov_floor = cfg.mppi_cov_floor;
    scratch.mppi = std::move(st);
  } else if (scratch.prev_traj) {
    // receding-horizon warm start: time-shift the previous mean trajectory
    const double delta = cfg.replan_stride * scenario.sim_dt;
    const Eigen::MatrixXd S = time_shift_matrix(res.basis(), delta);
    const int m = res.basis().n_coef();
    Eigen::VectorXd shifted(2 * m);
    shifted << S * scratch.prev_traj->head(m), S * scratch.prev_traj->tail(m);
    scratch.mppi->mean_controls = N.transpose() * (shifted - xi_part);
  }

  auto& st = *scratch.mppi;
  const auto u_samples =
      mppi_sample(st, cfg.mppi_samples, cycle_seed, /*antithetic=*/true);
  std::vector<double> costs(u_samples.size());
  for (std::size_t j = 0; j < u_samples.size(); ++j)
    costs[j] = meta_cost(xi_part + N * u_samples[j], scene, cfg.metacost);
  mppi_step(st, u_samples, costs);

  StepResult out;
  out.traj = xi_part + N * st.mean_controls;
  scratch.prev_traj = out.traj;
  out.diag.batch_size = static_cast<int>(u_samples.size());
  out.diag.best_index = static_cast<int>(
      std::min_element(costs.begin(), costs.end()) - costs.begin());
  out.diag.best_cost = meta_cost(out.traj, scene, cfg.metacost);
  out.diag.best_residual = residuals(out.traj, scene).max();
  return out;
}

}  // namespace

StepResult mpc_step(PlannerKind kind, const Eigen::VectorXd& obs,
                    const PlannerResources& res,
                    const sim::ScenarioConfig& scenario,
                    EpisodeScratch& scratch, std::uint64_t cycle_seed,
                    int k_proj_override) {
  const auto t0 = std::chrono::steady_clock::now();
  StepResult out;
  if (kind == PlannerKind::kMppi) {
    out = mppi_step_cycle(obs, res, scenario, scratch, cycle_seed);
  } else {
    const auto& cfg = res.cfg();
    const SceneConstraints scene = res.scene_of(obs);
    const BoundaryConditions bc = res.bc_of(obs, scratch.last_accel);
    SampledBatch batch =
        sample_inputs(kind, obs, res, scenario, scene, cycle_seed);

    const auto xi_star = res.planner().plan_batch(batch.p, bc);
    std::vector<Eigen::VectorXd> b_batch(batch.p.size());
    for (std::size_t j = 0; j < batch.p.size(); ++j)
      b_batch[j] = equality_rhs(batch.p[j], bc, res.basis());

    ProjectionSolver::Options popts;
    popts.max_iters = k_proj_override > 0 ? k_proj_override : cfg.k_proj;
    popts.record_trace = false;
    const auto projected = res.projection().project(xi_star, b_batch, scene,
                                                    batch.lambda, {}, popts);

    std::vector<TrajectoryCoeffs> xi_bar(projected.size());
    for (std::size_t j = 0; j < projected.size(); ++j)
      xi_bar[j] = projected[j].xi_bar;
    const auto costs = meta_cost_batch(xi_bar, scene, cfg.metacost);
    const auto [best, traj] = select_best(xi_bar, costs);

    out.traj = traj;
    scratch.prev_traj = out.traj;
    out.diag.batch_size = static_cast<int>(xi_bar.size());
    out.diag.best_index = best;
    out.diag.best_cost = costs[best];
    out.diag.best_residual = residuals(traj, scene).max();
  }
  out.diag.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
  return out;
}

// ---------------------------------------------------------------------------
// Episodes and benchmarks
// ---------------------------------------------------------------------------

EpisodeResult run_episode(PlannerKind kind, const sim::ScenarioConfig& scenario,
                          const PlannerResources& res, int k_proj_override,
                          std::vector<EpisodeTraceRow>* trace) {
  sim::SimState state = sim::spawn_scenario(scenario);
  EpisodeScratch scratch;
  EpisodeResult out;

  const auto& cfg = res.cfg();
  const int steps =
      static_cast<int>(std::llround(scenario.episode_len / scenario.sim_dt));
  const int m = res.basis().n_coef();
  const double tf = cfg.grid.tf;

  TrajectoryCoeffs current;
  bool have_plan = false;
  double speed_sum = 0.0;
  double resid_sum = 0.0, wall_sum = 0.0;
  int recorded = 0, cycles = 0;

  for (int i = 0; i < steps; ++i) {
    if (i % cfg.replan_stride == 0) {
      const Eigen::VectorXd obs = sim::observe(state, scenario);
      try {
        const StepResult r = mpc_step(
            kind, obs, res, scenario, scratch,
            rng::derive(scenario.seed, 0xCBull + static_cast<int>(kind), cycles),
            k_proj_override);
        current = r.traj;
        have_plan = true;
        resid_sum += r.diag.best_residual;
        wall_sum += r.diag.wall_ms;
      } catch (const qp::SolverError&) {
        have_plan = false;  // fall back to straight-line braking
      }
      ++cycles;
    }
    const double t_local =
        (i % cfg.replan_stride) * scenario.sim_dt + 0.5 * scenario.sim_dt;
    double ax = 0.0, ay = 0.0;
    if (have_plan) {
      ax = eval_poly(current.head(m), tf, t_local, 2);
      ay = eval_poly(current.tail(m), tf, t_local, 2);
    } else if (state.ego.vx > 0.0) {
      ax = -0.7 * cfg.a_max;
    }
    scratch.last_accel << ax, ay;
    sim::step(state, scenario, ax, ay, scenario.sim_dt);
    speed_sum += state.ego.vx;
    ++recorded;
    if (trace)
      trace->push_back({state.t, state.ego, state.neighbors, state.collided});
    if (state.collided) break;
  }

  out.collided = state.collided;
  out.mean_speed = recorded > 0 ? speed_sum / recorded : 0.0;
  out.mean_best_residual = cycles > 0 ? resid_sum / cycles : 0.0;
  out.mean_cycle_ms = cycles > 0 ? wall_sum / cycles : 0.0;
  out.n_cycles = cycles;
  return out;
}

std::uint64_t scenario_seed(std::uint64_t base_seed, int n_lanes, double density,
                            int episode) {
  return rng::derive(base_seed, static_cast<std::uint64_t>(n_lanes),
                     std::bit_cast<std::uint64_t>(density),
                     static_cast<std::uint64_t>(episode));
}

BenchmarkCell run_benchmark_cell(PlannerKind kind, const PlannerResources& res,
                                 int n_lanes, double density, int n_episodes,
                                 std::uint64_t base_seed, int n_threads,
                                 int k_proj_override) {
  sim::ScenarioConfig sc = res.scenario();
  sc.n_lanes = n_lanes;
  sc.density = density;

  std::vector<EpisodeResult> results(n_episodes);
  auto worker = [&](int begin, int end) {
    for (int e = begin; e < end; ++e) {
      sim::ScenarioConfig esc = sc;
      esc.seed = scenario_seed(base_seed, n_lanes, density, e);
      results[e] = run_episode(kind, esc, res, k_proj_override);
    }
  };
  if (n_threads <= 1) {
    worker(0, n_episodes);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n_episodes + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const int lo = t * chunk;
      const int hi = std::min(n_episodes, lo + chunk);
      if (lo < hi) pool.emplace_back(worker, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  BenchmarkCell cell;
  cell.n_lanes = n_lanes;
  cell.density = density;
  cell.planner = to_string(kind);
  cell.n_episodes = n_episodes;
  cell.base_seed = base_seed;
  int collided = 0;
  std::vector<double> free_speeds;
  for (const auto& r : results) {
    if (r.collided) ++collided;
    else free_speeds.push_back(r.mean_speed);
  }
  cell.collision_rate_pct = 100.0 * collided / std::max(1, n_episodes);
  if (!free_speeds.empty()) {
    double mean = 0.0;
    for (double v : free_speeds) mean += v;
    mean /= static_cast<double>(free_speeds.size());
    double var = 0.0;
    for (double v : free_speeds) var += (v - mean) * (v - mean);
    cell.avg_speed = mean;
    cell.speed_std = free_speeds.size() > 1
                         ? std::sqrt(var / (free_speeds.size() - 1))
                         : 0.0;
  } else {
    cell.avg_speed = std::numeric_limits<double>::quiet_NaN();
    cell.speed_std = std::numeric_limits<double>::quiet_NaN();
  }
  return cell;
}

BenchmarkReport run_benchmark(const std::vector<PlannerUnderTest>& planners,
                              const std::vector<int>& lane_counts,
                              const std::vector<double>& densities,
                              int n_episodes, std::uint64_t base_seed,
                              int n_threads, int k_proj_override) {
  BenchmarkReport report;
  for (const int lanes : lane_counts)
    for (const double density : densities)
      for (const auto& put : planners) {
        if (!put.resources)
          throw std::invalid_argument("run_benchmark: null resources");
        report.cells.push_back(run_benchmark_cell(
            put.kind, *put.resources, lanes, density, n_episodes, base_seed,
            n_threads, k_proj_override));
      }
  return report;
}

// ---------------------------------------------------------------------------
// Expert collection
// ---------------------------------------------------------------------------

std::vector<ExpertRecord> collect_expert(const sim::ScenarioConfig& scenario,
                                         const PlannerResources& res,
                                         const CollectOptions& opts) {
  const auto& cfg = res.cfg();
  const int m = res.basis().n_coef();
  std::vector<ExpertRecord> records;

  for (int ep = 0; ep < opts.episodes; ++ep) {
    sim::ScenarioConfig sc = scenario;
    sc.seed = rng::derive(opts.seed, 0xE1ull, ep);
    sim::SimState state = sim::spawn_scenario(sc);
    const int steps = static_cast<int>(std::llround(sc.episode_len / sc.sim_dt));

    TrajectoryCoeffs current;
    bool have_plan = false;
    Eigen::Vector2d last_accel = Eigen::Vector2d::Zero();
    int cycle = 0;
    for (int i = 0; i < steps && !state.collided; ++i) {
      if (i % cfg.replan_stride == 0) {
        const Eigen::VectorXd obs = sim::observe(state, sc);
        const SceneConstraints scene = res.scene_of(obs);
        const BoundaryConditions bc = res.bc_of(obs, last_accel);
        const BehaviorBounds bb = res.behavior_bounds(scene);
        const Eigen::VectorXd b_eq =
            equality_rhs(BehavioralInput{}, bc, res.basis());

        ProjectionSolver::Options popts;
        popts.max_iters = cfg.k_proj;
        popts.record_trace = false;

        auto objective = [&](const Eigen::VectorXd& pf) {
          const BehavioralInput p = BehavioralInput::from_flat(pf);
          const TrajectoryCoeffs xi = res.planner().plan(p, bc);
          const auto st = res.projection().project_one(xi, b_eq, scene, popts);
          return meta_cost(st.xi_bar, scene, cfg.metacost);
        };

        SamplingDistribution init;
        init.mean.resize(2 * cfg.m_seg);
        init.mean.head(cfg.m_seg)
            .setConstant(nearest_lane_center(lane_centers_in_frame(obs, sc)));
        init.mean.tail(cfg.m_seg).setConstant(cfg.metacost.v_des);
        init.cov_diag = Eigen::VectorXd::Constant(init.mean.size(), 4.0);

        CemOptions copts;
        copts.iters = opts.cem_iters;
        copts.batch_size = opts.cem_batch;
        copts.elite_frac = opts.cem_elite_frac;
        copts.seed = rng::derive(opts.seed, 0xCE11ull, ep, cycle);
        copts.lower = bb.lower(cfg.m_seg);
        copts.upper = bb.upper(cfg.m_seg);
        const CemResult cem = cem_optimize(objective, init, copts);

        const BehavioralInput p_best = BehavioralInput::from_flat(cem.best);
        const TrajectoryCoeffs xi = res.planner().plan(p_best, bc);
        const auto st = res.projection().project_one(xi, b_eq, scene, popts);
        current = st.xi_bar;
        have_plan = true;

        if (cycle % opts.record_stride == 0) {
          ExpertRecord rec;
          rec.o = obs;
          rec.tau_e.resize(2 * res.basis().n_steps());
          rec.tau_e << res.basis().W * current.head(m),
              res.basis().W * current.tail(m);
          records.push_back(std::move(rec));
        }
        ++cycle;
      }
      const double t_local =
          (i % cfg.replan_stride) * sc.sim_dt + 0.5 * sc.sim_dt;
      double ax = 0.0, ay = 0.0;
      if (have_plan) {
        ax = eval_poly(current.head(m), cfg.grid.tf, t_local, 2);
        ay = eval_poly(current.tail(m), cfg.grid.tf, t_local, 2);
      }
      last_accel << ax, ay;
      sim::step(state, sc, ax, ay, sc.sim_dt);
    }
  }
  return records;
}

}  // namespace densedrive::harness
