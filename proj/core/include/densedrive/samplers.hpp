#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "densedrive/planner.hpp"

namespace densedrive {

/// Pre-specified behavioral-input grid centered on lane centerlines.
struct GridSpec {
  std::vector<double> lateral_offsets;   // meters, relative to lane centers
  std::vector<double> speed_setpoints;   // m/s
  bool per_segment = false;  // vary set-points per segment (product explodes)
  std::size_t max_batch = 100000;
};

/// Deterministic Cartesian product: lanes (outer), offsets, speeds. With
/// per_segment the product additionally runs over every segment combination.
std::vector<BehavioralInput> grid_sampler(const GridSpec& spec,
                                          const std::vector<double>& lane_centers,
                                          int m_seg);

/// Diagonal Gaussian over the flat behavioral input (optionally with an
/// appended lambda block).
struct SamplingDistribution {
  Eigen::VectorXd mean;
  Eigen::VectorXd cov_diag;

  void validate() const;
};

struct GaussianSample {
  BehavioralInput p;
  Eigen::VectorXd lambda_init;
};

/// n i.i.d. draws; the p block is clamped into bounds, lambda is free. If
/// the distribution does not cover lambda (mean length == 2*m_seg), lambda
/// comes back zero of length n_lambda.
std::vector<GaussianSample> gaussian_sampler(const SamplingDistribution& dist,
                                             int n, std::uint64_t seed,
                                             const BehaviorBounds& bounds,
                                             int m_seg, int n_lambda);

// ---------------------------------------------------------------------------
// Cross-entropy method
// ---------------------------------------------------------------------------

struct CemOptions {
  int iters = 20;
  int batch_size = 5000;
  double elite_frac = 0.1;
  std::uint64_t seed = 0;
  double cov_floor = 1e-6;
  Eigen::VectorXd lower, upper;  // optional elementwise clamp box
};

struct CemResult {
  Eigen::VectorXd best;
  double best_cost = 0.0;
  SamplingDistribution dist;          // final fitted distribution
  std::vector<double> best_history;   // best-ever cost after each batch
};

/// Iteratively samples, evaluates and refits mean/diagonal covariance to the
/// lowest-cost fraction. Evaluates iters+1 batches (the initial one plus one
/// per refit); returns the best-ever sample.
CemResult cem_optimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                       const SamplingDistribution& init, const CemOptions& opts);

// ---------------------------------------------------------------------------
// MPPI
// ---------------------------------------------------------------------------

struct MppiState {
  Eigen::VectorXd mean_controls;  // perturbation mean over trajectory coeffs
  Eigen::VectorXd cov_diag;
  double temperature = 2.0;
  double cov_floor = 1e-6;

  void validate() const;
};

/// Draws n samples around the mean; antithetic pairs (+eps, -eps) keep the
/// sample mean exactly centered. Odd n appends the unperturbed mean.
std::vector<Eigen::VectorXd> mppi_sample(const MppiState& state, int n,
                                         std::uint64_t seed,
                                         bool antithetic = true);

/// Exponentially weighted refit of mean and diagonal covariance. Weights are
/// softmax(-(cost - min cost)/temperature), overflow-safe for finite costs.
void mppi_step(MppiState& state, const std::vector<Eigen::VectorXd>& samples,
               const std::vector<double>& costs);

}  // namespace densedrive
