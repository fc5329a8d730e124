#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "densedrive/metacost.hpp"
#include "densedrive/planner.hpp"
#include "densedrive/policy.hpp"
#include "densedrive/projection.hpp"

namespace densedrive {

// ---------------------------------------------------------------------------
// Expert dataset (one JSON record per line: o: 55 floats, tau_e: 2n floats)
// ---------------------------------------------------------------------------

struct ExpertRecord {
  Eigen::VectorXd o;
  Eigen::VectorXd tau_e;  // [x(t0..tf); y(t0..tf)] sampled positions
};

std::vector<ExpertRecord> load_expert_jsonl(const std::string& path);
void save_expert_jsonl(const std::string& path,
                       const std::vector<ExpertRecord>& records);
std::vector<Eigen::VectorXd> observations_of(
    const std::vector<ExpertRecord>& records);

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// z = mu + sigma .* noise
Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu,
                               const Eigen::VectorXd& sigma,
                               const Eigen::VectorXd& noise);

/// KL(N(mu, diag sigma^2) || N(0, I)), closed form.
double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma);

/// Taped pipeline: behavioral input -> tracking QP -> K projection
/// alternations. p_flat and lambda0 may be policy outputs (differentiable).
/// K == 0 skips the projection layer (ablation mode) and xi_bar == xi_star.
struct UnrolledForward {
  ad::Var xi_star;
  ad::Var xi_bar;
  std::vector<ad::Var> stages;  // projection stages; empty when K == 0
};

UnrolledForward unrolled_forward(ad::Tape& tape, ad::Var p_flat,
                                 ad::Var lambda0, const Planner& planner,
                                 const BoundaryConditions& bc,
                                 const ProjectionSolver& proj,
                                 const SceneConstraints& scene, int K);

struct CvaeLossParts {
  ad::Var total, recon, kl, ss;
};

/// Eq-13-style loss: ||Wbar xi_bar - tau_e||^2 + beta KL, optionally
/// augmented with the stage-summed meta-cost (ss_weight > 0, every
/// ss_stride-th stage).
CvaeLossParts cvae_loss_graph(ad::Tape& tape, const UnrolledForward& fwd,
                              const SceneConstraints& scene, ad::Var mu,
                              ad::Var logvar, const Eigen::VectorXd& tau_e,
                              double beta, double ss_weight, int ss_stride,
                              const MetaCostConfig& mc);

/// Meta-cost of the final unrolled output; stage_stride > 0 additionally
/// sums every stride-th intermediate stage.
ad::Var self_supervised_loss_graph(ad::Tape& tape, const UnrolledForward& fwd,
                                   const SceneConstraints& scene,
                                   const MetaCostConfig& mc,
                                   int stage_stride = 0);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Gradient descent with bias-corrected first/second moment estimates.
class Adam {
 public:
  Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

 private:
  Eigen::VectorXd m_, v_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 10;
  int minibatch = 16;
  int unroll_depth = 25;  // projection iterations K inside the graph
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  bool use_projection = true;  // ablation: skip the projection layer in training
  int ss_stage_stride = 1;     // CVAE self-supervision stage stride
  int ss_final_stride = 0;     // MLP loss: 0 = final stage only
  MetaCostConfig metacost;
};

/// Everything the losses need about the world; scene and boundary conditions
/// are derived per observation so the callbacks keep this module decoupled
/// from the simulator.
struct TrainEnv {
  const Planner* planner = nullptr;
  const ProjectionSolver* projection = nullptr;
  std::function<SceneConstraints(const Eigen::VectorXd& o)> scene_of;
  std::function<BoundaryConditions(const Eigen::VectorXd& o)> bc_of;
  ObservationScaling scaling;
};

struct TrainResult {
  std::vector<double> loss_curve;   // mean total loss per epoch
  std::vector<double> recon_curve;  // supervised only
  double initial_loss = 0.0;        // evaluation before training
  double final_loss = 0.0;          // evaluation after training
};

TrainResult train_self_supervised(const std::vector<Eigen::VectorXd>& observations,
                                  MlpPolicy& policy, const TrainEnv& env,
                                  const TrainConfig& cfg);

TrainResult train_supervised(const std::vector<ExpertRecord>& dataset,
                             CvaePolicy& policy, const TrainEnv& env,
                             const TrainConfig& cfg);

/// Mean self-supervised loss over a dataset, no parameter updates.
double evaluate_self_supervised(const MlpPolicy& policy,
                                const std::vector<Eigen::VectorXd>& observations,
                                const TrainEnv& env, const TrainConfig& cfg);

/// Mean reconstruction error over a dataset at z = mu (deterministic encode).
double evaluate_reconstruction(const CvaePolicy& policy,
                               const std::vector<ExpertRecord>& dataset,
                               const TrainEnv& env, const TrainConfig& cfg);

}  // namespace densedrive
