#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "densedrive/basis.hpp"
#include "densedrive/planner.hpp"
#include "densedrive/projection.hpp"
#include "densedrive/rng.hpp"

namespace ddtest {

using namespace densedrive;

inline BasisMatrices make_basis(int n_steps = 50, int order = 10,
                                double tf = 10.0) {
  return build_basis(order, TimeGrid{0.0, tf, n_steps});
}

/// Static obstacles spread over the road ahead.
inline SceneGeometry make_geometry(const BasisMatrices& basis, int n_obs,
                                   std::uint64_t seed) {
  SceneGeometry g;
  g.y_lb = -2.0;
  g.y_ub = 6.0;
  rng::Engine eng(seed);
  for (int i = 0; i < n_obs; ++i) {
    ObstaclePath p;
    const double x = 20.0 + 18.0 * i + eng.uniform(-4.0, 4.0);
    const double y = eng.uniform(g.y_lb + 1.0, g.y_ub - 1.0);
    p.x = Eigen::VectorXd::Constant(basis.n_steps(), x);
    p.y = Eigen::VectorXd::Constant(basis.n_steps(), y);
    g.obstacles.push_back(std::move(p));
  }
  return g;
}

inline Eigen::VectorXd random_vector(int n, std::uint64_t seed,
                                     double scale = 1.0) {
  rng::Engine eng(seed);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = scale * eng.normal();
  return v;
}

/// Control points of a roughly forward trajectory plus noise, so samples
/// stay in a numerically sane range.
inline TrajectoryCoeffs random_xi(const BasisMatrices& basis,
                                  std::uint64_t seed, double noise = 1.0) {
  const int m = basis.n_coef();
  TrajectoryCoeffs xi(2 * m);
  rng::Engine eng(seed);
  const double v = eng.uniform(3.0, 9.0);
  const double y0 = eng.uniform(-1.0, 5.0);
  for (int j = 0; j < m; ++j) {
    const double frac = static_cast<double>(j) / basis.order;
    xi(j) = v * basis.grid.tf * frac + noise * eng.normal();
    xi(m + j) = y0 + noise * eng.normal();
  }
  return xi;
}

// ---------------------------------------------------------------------------
// Independent augmented-Lagrangian oracle (dense matrices, spec row layout)
// ---------------------------------------------------------------------------

struct AlState {
  Eigen::VectorXd alpha_obs, d_obs;  // n_obs*n
  Eigen::VectorXd alpha_v, d_v, alpha_a, d_a;  // n
  Eigen::VectorXd s;  // 2n
};

/// Assembles the stacked target e from (alpha, d, s) following the published
/// row order of stacked_F: per axis [obstacles.., velocity, acceleration],
/// then the two lane blocks.
inline Eigen::VectorXd assemble_e(const SceneConstraints& sc, const AlState& st) {
  const int n = sc.n_steps;
  const int rows_axis = (sc.n_obs + 2) * n;
  Eigen::VectorXd e(2 * rows_axis + 2 * n);
  const double a = sc.geom.ellipse_a, b = sc.geom.ellipse_b;
  const double cw = collision_row_scale(sc.geom);
  for (int i = 0; i < sc.n_obs; ++i) {
    for (int t = 0; t < n; ++t) {
      const int k = i * n + t;
      e(i * n + t) =
          cw * (sc.x_o(k) / a + st.d_obs(k) * std::cos(st.alpha_obs(k)));
      e(rows_axis + i * n + t) =
          cw * (sc.y_o(k) / b + st.d_obs(k) * std::sin(st.alpha_obs(k)));
    }
  }
  for (int t = 0; t < n; ++t) {
    e(sc.n_obs * n + t) = st.d_v(t) * std::cos(st.alpha_v(t));
    e((sc.n_obs + 1) * n + t) = st.d_a(t) * std::cos(st.alpha_a(t));
    e(rows_axis + sc.n_obs * n + t) = st.d_v(t) * std::sin(st.alpha_v(t));
    e(rows_axis + (sc.n_obs + 1) * n + t) = st.d_a(t) * std::sin(st.alpha_a(t));
    e(2 * rows_axis + t) = sc.geom.y_ub - st.s(t);
    e(2 * rows_axis + n + t) = -sc.geom.y_lb - st.s(n + t);
  }
  return e;
}

/// Full augmented Lagrangian value (dense route).
inline double al_value(const Eigen::VectorXd& xi_bar,
                       const Eigen::VectorXd& xi_star,
                       const Eigen::VectorXd& lambda,
                       const SceneConstraints& sc, double rho,
                       const AlState& st) {
  const Eigen::MatrixXd F = sc.stacked_F();
  const Eigen::VectorXd e = assemble_e(sc, st);
  return 0.5 * (xi_bar - xi_star).squaredNorm() - lambda.dot(xi_bar) +
         0.5 * rho * (F * xi_bar - e).squaredNorm();
}

/// 1-D minimization by coarse grid plus ternary refinement.
inline double minimize_1d(const std::function<double(double)>& f, double lo,
                          double hi, int grid_points = 2000) {
  double best_x = lo, best_f = f(lo);
  for (int i = 1; i < grid_points; ++i) {
    const double x = lo + (hi - lo) * i / (grid_points - 1);
    const double v = f(x);
    if (v < best_f) {
      best_f = v;
      best_x = x;
    }
  }
  const double cell = (hi - lo) / (grid_points - 1);
  double a = std::max(lo, best_x - cell), b = std::min(hi, best_x + cell);
  for (int it = 0; it < 200; ++it) {
    const double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
    if (f(m1) < f(m2)) b = m2;
    else a = m1;
  }
  return 0.5 * (a + b);
}

}  // namespace ddtest
