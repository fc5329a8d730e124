#pragma once

#include <Eigen/Dense>

namespace densedrive {

/// Uniform time grid over [t0, tf], endpoints included.
struct TimeGrid {
  double t0 = 0.0;
  double tf = 10.0;
  int n_steps = 100;

  double dt() const { return (tf - t0) / (n_steps - 1); }
  double at(int i) const { return t0 + dt() * i; }

  /// Throws std::invalid_argument if tf <= t0 or n_steps < 2.
  void validate() const;
};

/// Bernstein basis of the given degree sampled on a time grid, with analytic
/// first and second derivative matrices (1/tf chain factors included).
/// Bernstein columns keep the derivative rows uniformly scaled across the
/// grid; monomial columns lose all curvature authority near t = 0, which
/// starves the downstream projection of pull exactly where boundary
/// conditions bite. Coefficients are control points: a constant trajectory
/// has all-equal entries.
struct BasisMatrices {
  Eigen::MatrixXd W;    // n_steps x (order+1), positions
  Eigen::MatrixXd Wd;   // first derivative
  Eigen::MatrixXd Wdd;  // second derivative
  int order = 0;
  TimeGrid grid;

  int n_coef() const { return order + 1; }
  int n_steps() const { return grid.n_steps; }
};

BasisMatrices build_basis(int order, const TimeGrid& grid);

/// Trajectory coefficients, x block stacked over y block: xi = [c_x; c_y].
using TrajectoryCoeffs = Eigen::VectorXd;

inline Eigen::VectorXd coeffs_x(const TrajectoryCoeffs& xi) {
  return xi.head(xi.size() / 2);
}
inline Eigen::VectorXd coeffs_y(const TrajectoryCoeffs& xi) {
  return xi.tail(xi.size() / 2);
}

struct SampledTrajectory {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

/// Samples W.c (deriv=0), Wd.c (deriv=1) or Wdd.c (deriv=2) for both axes.
SampledTrajectory eval_trajectory(const TrajectoryCoeffs& xi,
                                  const BasisMatrices& basis, int deriv);

/// Linear map taking coefficients of q(t) to coefficients of q(t + delta),
/// restricted to the same grid parametrization (Taylor shift in the
/// normalized variable). Used for receding-horizon warm starts.
Eigen::MatrixXd time_shift_matrix(const BasisMatrices& basis, double delta);

/// Evaluates one polynomial axis (coefficients over the normalized monomial
/// basis) at an arbitrary time, deriv in {0, 1, 2}. Off-grid counterpart of
/// eval_trajectory, used to sample controls between grid points.
double eval_poly(const Eigen::VectorXd& axis_coeffs, double tf, double t,
                 int deriv);

}  // namespace densedrive
