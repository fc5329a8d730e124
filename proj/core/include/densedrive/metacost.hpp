#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "densedrive/projection.hpp"

namespace densedrive {

struct MetaCostConfig {
  double v_des = 10.0;   // desired longitudinal speed, m/s
  double w_res = 1e3;    // residual weight; dominant so feasibility ranks first
  double w_speed = 1.0;  // speed-deviation weight
};

/// c = w_res * (sum of per-family max violations) + w_speed * mean over the
/// grid of (xdot - v_des)^2. The speed term is averaged, not summed, so the
/// cost is grid-resolution independent.
double meta_cost(const TrajectoryCoeffs& xi_bar, const SceneConstraints& scene,
                 const MetaCostConfig& cfg);

std::vector<double> meta_cost_batch(const std::vector<TrajectoryCoeffs>& batch,
                                    const SceneConstraints& scene,
                                    const MetaCostConfig& cfg);

/// Same cost as a tape graph, for losses that backpropagate through it.
ad::Var meta_cost_on_tape(ad::Tape& tape, ad::Var xi_bar,
                          const SceneConstraints& scene,
                          const MetaCostConfig& cfg);

/// Minimal-cost sample; ties break to the lowest index.
std::pair<int, TrajectoryCoeffs> select_best(
    const std::vector<TrajectoryCoeffs>& xi_bar_batch,
    const std::vector<double>& costs);

}  // namespace densedrive
