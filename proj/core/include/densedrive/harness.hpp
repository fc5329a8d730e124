#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "densedrive/learn.hpp"
#include "densedrive/metacost.hpp"
#include "densedrive/planner.hpp"
#include "densedrive/policy.hpp"
#include "densedrive/projection.hpp"
#include "densedrive/samplers.hpp"
#include "densedrive/sim.hpp"

namespace densedrive::harness {

enum class PlannerKind { kGrid, kSupervised, kSelfSupervised, kMppi };

std::string to_string(PlannerKind kind);
PlannerKind planner_kind_from_string(const std::string& name);

struct HarnessConfig {
  TimeGrid grid{0.0, 10.0, 100};
  int order = 10;
  int m_seg = 4;
  PlannerWeights weights;
  double rho = 2.0;
  int obstacle_slots = 10;
  int k_proj = 25;
  int n_samples = 16;     // draws per cycle for the learned planners
  int replan_stride = 1;  // sim steps between replans

  // constraint bounds handed to the projection
  double ellipse_a = 7.0;
  double ellipse_b = 3.2;
  double v_min = 0.1;
  double a_max = 4.0;
  double lane_margin = 1.3;  // shrink road edges to center bounds

  MetaCostConfig metacost;  // v_des is set to the scenario v_max per episode

  GridSpec grid_spec{{-4.0, 0.0, 4.0}, {4.0, 7.0, 10.0}, false};

  // self-supervised sampling around the policy mean
  double policy_cov_p = 0.25;
  double policy_cov_lambda = 0.01;

  // mppi
  int mppi_samples = 64;
  double mppi_temperature = 2.0;
  double mppi_init_var = 0.05;
  double mppi_cov_floor = 0.02;
};

/// Immutable per-run resources: one planner factorization and one projection
/// factorization shared by every episode (scene data enters through right-
/// hand sides only).
class PlannerResources {
 public:
  PlannerResources(const HarnessConfig& cfg, const sim::ScenarioConfig& scenario);

  const HarnessConfig& cfg() const { return cfg_; }
  const BasisMatrices& basis() const { return basis_; }
  const Planner& planner() const { return *planner_; }
  const ProjectionSolver& projection() const { return *projection_; }
  const sim::ScenarioConfig& scenario() const { return scenario_; }

  void set_mlp(MlpPolicy policy, ObservationScaling scaling);
  void set_cvae(CvaePolicy policy, ObservationScaling scaling);
  const MlpPolicy* mlp() const { return mlp_ ? &*mlp_ : nullptr; }
  const CvaePolicy* cvae() const { return cvae_ ? &*cvae_ : nullptr; }
  const ObservationScaling& scaling() const { return scaling_; }

  /// Scene in the ego-centered road frame of an observation, obstacle slots
  /// padded to the factored structure.
  SceneConstraints scene_of(const Eigen::VectorXd& obs,
                            bool build_matrices = false) const;
  /// accel carries the previously commanded acceleration into the boundary
  /// conditions so consecutive receding-horizon plans join smoothly.
  BoundaryConditions bc_of(const Eigen::VectorXd& obs,
                           const Eigen::Vector2d& accel =
                               Eigen::Vector2d::Zero()) const;
  /// Squash/clamp box for the flat behavioral input under this scene.
  BehaviorBounds behavior_bounds(const SceneConstraints& scene) const;

  /// Training-environment view over the same factors and frame conventions.
  TrainEnv train_env() const;

  // receding-horizon trajectory warm start machinery (MPPI)
  const Eigen::MatrixXd& null_basis() const { return null_basis_; }
  Eigen::VectorXd particular_solution(const Eigen::VectorXd& b) const;

  PlannerResources(const PlannerResources&) = delete;
  PlannerResources& operator=(const PlannerResources&) = delete;

 private:
  HarnessConfig cfg_;
  sim::ScenarioConfig scenario_;
  BasisMatrices basis_;
  std::unique_ptr<Planner> planner_;
  std::unique_ptr<ProjectionSolver> projection_;
  std::optional<MlpPolicy> mlp_;
  std::optional<CvaePolicy> cvae_;
  ObservationScaling scaling_;
  Eigen::MatrixXd null_basis_;   // orthonormal kernel of the equality rows
  Eigen::MatrixXd pinv_bridge_;  // A^T (A A^T)^-1
};

struct StepDiagnostics {
  int batch_size = 0;
  int best_index = -1;
  double best_cost = 0.0;
  double best_residual = 0.0;
  double wall_ms = 0.0;
};

struct StepResult {
  TrajectoryCoeffs traj;
  StepDiagnostics diag;
};

/// Per-episode mutable planner state (MPPI distribution, warm starts).
struct EpisodeScratch {
  std::optional<MppiState> mppi;
  std::optional<TrajectoryCoeffs> prev_traj;
  Eigen::Vector2d last_accel = Eigen::Vector2d::Zero();
};

StepResult mpc_step(PlannerKind kind, const Eigen::VectorXd& obs,
                    const PlannerResources& res,
                    const sim::ScenarioConfig& scenario,
                    EpisodeScratch& scratch, std::uint64_t cycle_seed,
                    int k_proj_override = -1);

struct EpisodeResult {
  bool collided = false;
  double mean_speed = 0.0;
  double mean_best_residual = 0.0;
  double mean_cycle_ms = 0.0;
  int n_cycles = 0;
};

struct EpisodeTraceRow {
  double t;
  sim::EgoState ego;
  std::vector<sim::NeighborVehicle> neighbors;
  bool collided;
};

EpisodeResult run_episode(PlannerKind kind, const sim::ScenarioConfig& scenario,
                          const PlannerResources& res, int k_proj_override = -1,
                          std::vector<EpisodeTraceRow>* trace = nullptr);

struct BenchmarkCell {
  int n_lanes = 2;
  double density = 1.0;
  std::string planner;
  double collision_rate_pct = 0.0;
  double avg_speed = 0.0;   // over collision-free episodes
  double speed_std = 0.0;   // across those episodes
  int n_episodes = 0;
  std::uint64_t base_seed = 0;
};

struct BenchmarkReport {
  std::vector<BenchmarkCell> cells;
};

/// Scenario seeds depend on (base seed, lanes, density, episode index) only,
/// so every planner faces the identical traffic set.
std::uint64_t scenario_seed(std::uint64_t base_seed, int n_lanes, double density,
                            int episode);

struct PlannerUnderTest {
  PlannerKind kind;
  const PlannerResources* resources = nullptr;  // policies preloaded by caller
};

BenchmarkCell run_benchmark_cell(PlannerKind kind, const PlannerResources& res,
                                 int n_lanes, double density, int n_episodes,
                                 std::uint64_t base_seed, int n_threads = 1,
                                 int k_proj_override = -1);

BenchmarkReport run_benchmark(const std::vector<PlannerUnderTest>& planners,
                              const std::vector<int>& lane_counts,
                              const std::vector<double>& densities,
                              int n_episodes, std::uint64_t base_seed,
                              int n_threads = 1, int k_proj_override = -1);

/// Drives episodes with a per-cycle CEM search over behavioral inputs and
/// records (observation, best projected trajectory) pairs.
struct CollectOptions {
  int episodes = 5;
  int cem_batch = 5000;
  int cem_iters = 10;
  double cem_elite_frac = 0.1;
  std::uint64_t seed = 0;
  int record_stride = 5;  // record every k-th planning cycle
};

std::vector<ExpertRecord> collect_expert(const sim::ScenarioConfig& scenario,
                                         const PlannerResources& res,
                                         const CollectOptions& opts);

}  // namespace densedrive::harness
