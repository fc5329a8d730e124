// densedrive command line: benchmark runner, policy training, expert
// collection, projection demos and plotting.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "densedrive/export.hpp"
#include "densedrive/harness.hpp"
#include "densedrive/learn.hpp"
#include "densedrive/rng.hpp"

namespace fs = std::filesystem;
using namespace densedrive;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

struct CommonOpts {
  std::uint64_t seed = 0;
  std::string scenario_path;
};

sim::ScenarioConfig scenario_from(const CommonOpts& c) {
  sim::ScenarioConfig sc;
  if (!c.scenario_path.empty()) sc = sim::load_scenario_config(c.scenario_path);
  sc.seed = c.seed;
  return sc;
}

void load_policy_into(harness::PlannerResources& res, const std::string& path) {
  const LoadedPolicy lp = load_policy(path);
  if (lp.meta.kind == "mlp") {
    res.set_mlp(lp.mlp, lp.meta.scaling);
  } else {
    res.set_cvae(lp.cvae, lp.meta.scaling);
  }
}

int run_bench(const CommonOpts& common, const std::vector<std::string>& planners,
              const std::vector<int>& lanes, std::vector<double> densities,
              int episodes, int k_proj, int threads, int replan_stride,
              int n_samples, const std::string& supervised_weights,
              const std::string& self_supervised_weights,
              const std::string& out_dir) {
  sim::ScenarioConfig sc = scenario_from(common);
  harness::HarnessConfig cfg;
  if (k_proj > 0) cfg.k_proj = k_proj;
  if (replan_stride > 0) cfg.replan_stride = replan_stride;
  if (n_samples > 0) cfg.n_samples = n_samples;

  fs::create_directories(out_dir);

  std::vector<std::unique_ptr<harness::PlannerResources>> owned;
  std::vector<harness::PlannerUnderTest> puts;
  for (const auto& name : planners) {
    const auto kind = harness::planner_kind_from_string(name);
    auto res = std::make_unique<harness::PlannerResources>(cfg, sc);
    if (kind == harness::PlannerKind::kSupervised) {
      if (supervised_weights.empty())
        throw CLI::ValidationError("--supervised-weights required for 'supervised'");
      load_policy_into(*res, supervised_weights);
    } else if (kind == harness::PlannerKind::kSelfSupervised) {
      if (self_supervised_weights.empty())
        throw CLI::ValidationError(
            "--self-supervised-weights required for 'self_supervised'");
      load_policy_into(*res, self_supervised_weights);
    }
    puts.push_back({kind, res.get()});
    owned.push_back(std::move(res));
  }

  const auto report = harness::run_benchmark(puts, lanes, densities, episodes,
                                             common.seed, threads);
  io::write_text(out_dir + "/benchmark.csv", io::benchmark_csv(report));
  io::write_text(out_dir + "/benchmark.json", io::benchmark_json(report));
  io::write_text(out_dir + "/benchmark.svg", io::svg_benchmark_bars(report));
  std::cout << io::benchmark_csv(report);
  std::cout << "wrote " << out_dir << "/benchmark.{csv,json,svg}\n";
  return 0;
}

int run_train(const CommonOpts& common, const std::string& mode,
              const std::string& data_path, int epochs, int unroll,
              double lr, int minibatch, bool no_projection,
              const std::string& out_path) {
  sim::ScenarioConfig sc = scenario_from(common);
  harness::HarnessConfig cfg;
  harness::PlannerResources res(cfg, sc);

  const auto dataset = load_expert_jsonl(data_path);
  if (dataset.empty()) throw CLI::ValidationError("dataset is empty: " + data_path);

  TrainConfig tc;
  tc.epochs = epochs;
  tc.unroll_depth = unroll;
  tc.lr = lr;
  tc.minibatch = minibatch;
  tc.seed = common.seed;
  tc.use_projection = !no_projection;
  tc.metacost.v_des = sc.v_max;

  PolicyMetadata meta;
  meta.scaling.vel_scale = sc.v_max;
  meta.seed = common.seed;

  const int n_xi = res.planner().factor().n_primal();
  const int out_width = 2 * cfg.m_seg + n_xi;

  TrainEnv env = res.train_env();
  env.scaling = meta.scaling;

  if (mode == "self-supervised" || mode == "self_supervised") {
    MlpPolicy policy = MlpPolicy::make({55, 256, 256, out_width}, common.seed);
    const auto result =
        train_self_supervised(observations_of(dataset), policy, env, tc);
    save_mlp(out_path, policy, meta);
    std::cout << "self-supervised loss " << result.initial_loss << " -> "
              << result.final_loss << " over " << epochs << " epochs\n";
  } else if (mode == "supervised") {
    CvaePolicy policy;
    policy.latent_dim = 8;
    const int tau_len = static_cast<int>(dataset.front().tau_e.size());
    policy.encoder =
        MlpPolicy::make({55 + tau_len, 256, 256, 2 * policy.latent_dim},
                        rng::derive(common.seed, 1));
    policy.decoder = MlpPolicy::make({policy.latent_dim + 55, 256, 256, out_width},
                                     rng::derive(common.seed, 2));
    const auto result = train_supervised(dataset, policy, env, tc);
    save_cvae(out_path, policy, meta);
    std::cout << "reconstruction " << result.initial_loss << " -> "
              << result.final_loss << " over " << epochs << " epochs\n";
  } else {
    throw CLI::ValidationError("--mode must be supervised or self-supervised");
  }
  std::cout << "wrote " << out_path << " (+.json sidecar)\n";
  return 0;
}

int run_collect(const CommonOpts& common, int episodes, int cem_batch,
                int cem_iters, int record_stride, const std::string& out_path) {
  sim::ScenarioConfig sc = scenario_from(common);
  harness::HarnessConfig cfg;
  harness::PlannerResources res(cfg, sc);

  harness::CollectOptions opts;
  opts.episodes = episodes;
  opts.cem_batch = cem_batch;
  opts.cem_iters = cem_iters;
  opts.record_stride = record_stride;
  opts.seed = common.seed;

  const auto records = harness::collect_expert(sc, res, opts);
  save_expert_jsonl(out_path, records);
  std::cout << "collected " << records.size() << " expert records -> "
            << out_path << "\n";
  return 0;
}

int run_project_demo(const CommonOpts& common, int n_obstacles, int batch,
                     int iters, const std::string& trace_path,
                     const std::string& svg_path) {
  const auto basis = build_basis(10, TimeGrid{0.0, 10.0, 100});
  // static obstacles on the middle lane of a three-lane corridor
  SceneGeometry g;
  g.y_lb = -2.0;
  g.y_ub = 10.0;
  rng::Engine eng(rng::derive(common.seed, 0xDE30));
  for (int i = 0; i < n_obstacles; ++i) {
    ObstaclePath p;
    p.x = Eigen::VectorXd::Constant(basis.n_steps(),
                                    35.0 + 35.0 * i + eng.uniform(-3.0, 3.0));
    p.y = Eigen::VectorXd::Constant(basis.n_steps(), 4.0);
    g.obstacles.push_back(std::move(p));
  }
  const auto scene = reformulate_constraints(g, basis);
  const Planner planner(basis, 4, PlannerWeights{}, TerminalMode::kAccelZero);
  const ProjectionSolver solver(scene, planner.A());
  BoundaryConditions bc;
  bc.b0 << 0.0, 4.0, 5.0, 0.0, 0.0, 0.0;
  const Eigen::VectorXd b_eq = equality_rhs(BehavioralInput{}, bc, basis);

  rng::Engine pe(rng::derive(common.seed, 0xDE31));
  std::vector<TrajectoryCoeffs> xi_star(batch);
  std::vector<Eigen::VectorXd> b_batch(batch, b_eq);
  for (int j = 0; j < batch; ++j) {
    BehavioralInput p;
    p.y_d = Eigen::VectorXd::Constant(4, pe.uniform(g.y_lb, g.y_ub));
    p.v_d = Eigen::VectorXd::Constant(4, pe.uniform(0.1, 10.0));
    xi_star[j] = planner.plan(p, bc);
  }
  const auto states = solver.project(xi_star, b_batch, scene, {}, {},
                                     {.max_iters = iters, .record_trace = true});

  int converged = 0;
  for (const auto& st : states)
    if (st.residual_trace.back() <= 1e-3) ++converged;
  std::cout << converged << "/" << batch << " samples reached residual <= 1e-3 in "
            << iters << " iterations\n";

  if (!trace_path.empty()) {
    io::write_text(trace_path, io::residual_trace_csv(states));
    std::cout << "residual trace -> " << trace_path << "\n";
  }
  if (!svg_path.empty()) {
    std::vector<TrajectoryCoeffs> projected;
    projected.reserve(states.size());
    for (const auto& st : states) projected.push_back(st.xi_bar);
    io::write_text(svg_path, io::svg_scene(projected, scene));
    const fs::path raw = fs::path(svg_path).replace_extension(".pre.svg");
    io::write_text(raw.string(), io::svg_scene(xi_star, scene));
    std::cout << "scene overlays -> " << svg_path << " and " << raw.string()
              << "\n";
  }
  return 0;
}

int run_plot(const std::string& input, const std::string& output) {
  const std::string csv = io::read_text(input);
  const auto header_end = csv.find('\n');
  const std::string header = csv.substr(0, header_end);
  if (header.rfind("iteration,sample_index,residual", 0) == 0) {
    // rebuild per-sample traces
    std::vector<ProjectionState> states;
    std::istringstream is(csv.substr(header_end + 1));
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::size_t c1 = line.find(','), c2 = line.find(',', c1 + 1);
      const std::size_t sample = std::stoul(line.substr(c1 + 1, c2 - c1 - 1));
      if (states.size() <= sample) states.resize(sample + 1);
      states[sample].residual_trace.push_back(std::stod(line.substr(c2 + 1)));
    }
    io::write_text(output, io::svg_residual_curves(states));
  } else if (header.rfind("n_lanes,density,planner", 0) == 0) {
    harness::BenchmarkReport report;
    std::istringstream is(csv.substr(header_end + 1));
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      harness::BenchmarkCell cell;
      std::istringstream ls(line);
      std::string field;
      std::getline(ls, field, ',');
      cell.n_lanes = std::stoi(field);
      std::getline(ls, field, ',');
      cell.density = std::stod(field);
      std::getline(ls, cell.planner, ',');
      std::getline(ls, field, ',');
      cell.collision_rate_pct = std::stod(field);
      std::getline(ls, field, ',');
      cell.avg_speed = std::stod(field);
      std::getline(ls, field, ',');
      cell.speed_std = std::stod(field);
      std::getline(ls, field, ',');
      cell.n_episodes = std::stoi(field);
      report.cells.push_back(cell);
    }
    io::write_text(output, io::svg_benchmark_bars(report));
  } else {
    throw CLI::ValidationError("unrecognized csv header: " + header);
  }
  std::cout << "wrote " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"batched trajectory optimization and benchmarking for dense-traffic driving"};
  app.require_subcommand(1);
  app.fallthrough(true);

  CommonOpts common;
  app.add_option("--seed", common.seed, "master seed; all randomness derives from it");

  // bench
  auto* bench = app.add_subcommand("bench", "run seeded closed-loop benchmarks");
  std::vector<std::string> planners{"grid"};
  std::vector<int> lanes{2};
  std::vector<double> densities{1.0, 1.5, 3.0};
  int episodes = 50, k_proj = -1, threads = 1, replan_stride = -1,
      n_samples = -1;
  std::string sup_w, selfsup_w, out_dir = "bench_out";
  bench->add_option("config", common.scenario_path, "scenario config JSON")
      ->check(CLI::ExistingFile);
  bench->add_option("--planners", planners,
                    "grid, supervised, self_supervised, mppi");
  bench->add_option("--lanes", lanes, "lane counts to sweep");
  bench->add_option("--density", densities, "densities to sweep");
  bench->add_option("--episodes", episodes, "episodes per cell");
  bench->add_option("--k-proj", k_proj, "projection iterations per plan");
  bench->add_option("--threads", threads, "episode workers");
  bench->add_option("--replan-stride", replan_stride,
                    "sim steps between replans");
  bench->add_option("--samples", n_samples, "draws per cycle (learned planners)");
  bench->add_option("--supervised-weights", sup_w, "CVAE weights file");
  bench->add_option("--self-supervised-weights", selfsup_w, "MLP weights file");
  bench->add_option("--out", out_dir, "output directory");

  // train
  auto* train = app.add_subcommand("train", "train a behavioral-input policy");
  std::string mode = "self-supervised", data_path, train_out = "policy.bin";
  int epochs = 20, unroll = 25, minibatch = 16;
  double lr = 1e-3;
  bool no_projection = false;
  train->add_option("--mode", mode, "supervised | self-supervised");
  train->add_option("--data", data_path, "expert JSONL dataset")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--epochs", epochs);
  train->add_option("--unroll", unroll, "projection iterations K in the graph");
  train->add_option("--lr", lr);
  train->add_option("--minibatch", minibatch);
  train->add_flag("--no-projection", no_projection,
                  "ablation: train without the projection layer");
  train->add_option("--out", train_out, "weights output path");
  train->add_option("--scenario", common.scenario_path, "scenario config JSON")
      ->check(CLI::ExistingFile);

  // collect-expert
  auto* collect = app.add_subcommand("collect-expert",
                                     "drive with per-cycle CEM and record (o, tau_e)");
  int c_episodes = 5, cem_batch = 5000, cem_iters = 10, record_stride = 5;
  std::string collect_out = "expert.jsonl";
  collect->add_option("--episodes", c_episodes);
  collect->add_option("--cem-batch", cem_batch);
  collect->add_option("--cem-iters", cem_iters);
  collect->add_option("--record-stride", record_stride,
                      "record every k-th planning cycle");
  collect->add_option("--out", collect_out);
  collect->add_option("--scenario", common.scenario_path, "scenario config JSON")
      ->check(CLI::ExistingFile);

  // project-demo
  auto* demo = app.add_subcommand("project-demo",
                                  "project random plans onto a static scene");
  int n_obstacles = 4, batch = 400, iters = 100;
  std::string trace_out = "trace.csv", svg_out;
  demo->add_option("--obstacles", n_obstacles);
  demo->add_option("--batch", batch);
  demo->add_option("--iters", iters);
  demo->add_option("--trace", trace_out, "residual trace CSV path");
  demo->add_option("--svg", svg_out, "projected-scene SVG path");

  // plot
  auto* plot = app.add_subcommand("plot", "render a CSV export as SVG");
  std::string plot_in, plot_out = "plot.svg";
  plot->add_option("input", plot_in, "residual-trace or benchmark CSV")
      ->required()
      ->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out);

  try {
    app.parse(argc, argv);
    if (bench->parsed())
      return run_bench(common, planners, lanes, densities, episodes, k_proj,
                       threads, replan_stride, n_samples, sup_w, selfsup_w,
                       out_dir);
    if (train->parsed())
      return run_train(common, mode, data_path, epochs, unroll, lr, minibatch,
                       no_projection, train_out);
    if (collect->parsed())
      return run_collect(common, c_episodes, cem_batch, cem_iters,
                         record_stride, collect_out);
    if (demo->parsed())
      return run_project_demo(common, n_obstacles, batch, iters, trace_out,
                              svg_out);
    if (plot->parsed()) return run_plot(plot_in, plot_out);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const qp::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
