#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "densedrive/tape.hpp"

namespace densedrive {

/// Fully connected net with tanh hidden layers and a linear output layer.
/// Weights are stored as row-major flat blobs so they can go onto a tape as
/// differentiable inputs.
struct MlpPolicy {
  std::vector<int> widths;              // {in, hidden..., out}
  std::vector<Eigen::VectorXd> w_flat;  // one per layer, row-major
  std::vector<Eigen::VectorXd> bias;

  static MlpPolicy make(const std::vector<int>& widths, std::uint64_t seed);

  int n_layers() const { return static_cast<int>(w_flat.size()); }
  int n_params() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& theta);

  Eigen::VectorXd forward_value(const Eigen::VectorXd& x) const;

  struct TapedPass {
    ad::Var out;
    std::vector<ad::Var> params;  // W0, b0, W1, b1, ... in flatten() order
  };
  /// Pushes the weights as differentiable inputs and evaluates the net.
  TapedPass forward(ad::Tape& tape, ad::Var x) const;
  /// Evaluates with externally supplied parameter vars (shared across calls).
  ad::Var forward_with(ad::Tape& tape, ad::Var x,
                       const std::vector<ad::Var>& params) const;
  std::vector<ad::Var> push_params(ad::Tape& tape) const;
};

/// Encoder/decoder pair; the decoder output feeds the optimization layers.
struct CvaePolicy {
  MlpPolicy encoder;  // (o_norm, tau_norm) -> (mu, logvar)
  MlpPolicy decoder;  // (z, o_norm) -> (p_raw, lambda)
  int latent_dim = 8;
  double beta = 1.0;
  double ss_weight = 0.0;

  int n_params() const { return encoder.n_params() + decoder.n_params(); }
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& theta);
};

/// Smooth squash of raw policy outputs into [lo, hi] per coordinate:
/// mid + halfrange * tanh(u).
ad::Var squash(ad::Tape& tape, ad::Var u, const Eigen::VectorXd& lo,
               const Eigen::VectorXd& hi);
Eigen::VectorXd squash_value(const Eigen::VectorXd& u, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi);

/// Normalization constants applied to observations (and expert trajectories)
/// before they enter a network.
struct ObservationScaling {
  double pos_scale = 50.0;  // meters
  double vel_scale = 10.0;  // m/s, defaults to v_max
};

/// Scales the 55-entry observation layout: headings stay raw, speeds divide
/// by vel_scale, positions by pos_scale.
Eigen::VectorXd normalize_observation(const Eigen::VectorXd& o,
                                      const ObservationScaling& s);

// ---------------------------------------------------------------------------
// Persistence: flat binary weights + JSON metadata sidecar
// ---------------------------------------------------------------------------

struct PolicyMetadata {
  std::string kind;  // "mlp" or "cvae"
  ObservationScaling scaling;
  std::uint64_t seed = 0;
  int latent_dim = 0;
  double beta = 0.0;
  double ss_weight = 0.0;
  std::string activation = "tanh";
};

void save_mlp(const std::string& path, const MlpPolicy& policy,
              const PolicyMetadata& meta);
void save_cvae(const std::string& path, const CvaePolicy& policy,
               const PolicyMetadata& meta);

struct LoadedPolicy {
  PolicyMetadata meta;
  MlpPolicy mlp;    // valid when meta.kind == "mlp"
  CvaePolicy cvae;  // valid when meta.kind == "cvae"
};

LoadedPolicy load_policy(const std::string& path);

}  // namespace densedrive
