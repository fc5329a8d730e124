#pragma once

#include <Eigen/Dense>
#include <vector>

#include "densedrive/basis.hpp"
#include "densedrive/qpcore.hpp"
#include "densedrive/tape.hpp"

namespace densedrive {

/// Predicted obstacle positions sampled on the planning grid.
struct ObstaclePath {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

struct SceneGeometry {
  std::vector<ObstaclePath> obstacles;
  double ellipse_a = 7.0;  // collision ellipse semi-axis along x
  double ellipse_b = 3.2;  // and along y
  double v_min = 0.1;
  double v_max = 10.0;
  double a_max = 4.0;
  double y_lb = -2.0;
  double y_ub = 2.0;
};

/// Common scale of a collision row pair: rows are (c/a) W and (c/b) W with
/// c = ellipse_b, so each pair stays isotropic in (d cos a, d sin a) — which
/// keeps the alternating block updates exact coordinate-wise minimizers —
/// while its least-squares weight stays comparable to the lane rows. Unit
/// collision-row weights stall the xi step badly.
inline double collision_row_scale(const SceneGeometry& g) {
  return g.ellipse_b;
}

/// Stacked inequality-constraint data for the projection optimizer.
///
/// Collision rows are normalized by the ellipse axes (then re-weighted by
/// collision_row_scale); every penalty row of F * xi - e measures the
/// violation of an isotropic constraint, so each alternating block update
/// below is the exact minimizer of the augmented Lagrangian over its own
/// variable.
struct SceneConstraints {
  SceneGeometry geom;
  const BasisMatrices* basis = nullptr;

  /// blockdiag([F_o; Wd; Wdd]) per axis; empty unless built with matrices.
  Eigen::MatrixXd F_tilde;  // 2*(n_obs+2)*n_steps x n_xi
  Eigen::MatrixXd G;        // 2*n_steps x n_xi, lane rows (y block only)

  Eigen::VectorXd x_o, y_o;      // stacked obstacle positions, n_obs*n_steps
  Eigen::VectorXd y_lane;        // [y_ub...; -y_lb...]
  Eigen::VectorXd d_min, d_max;  // (n_obs+2)*n_steps bound vectors

  int n_obs = 0;
  int n_steps = 0;
  int n_xi = 0;

  bool has_matrices() const { return F_tilde.size() > 0 || n_obs + n_steps == 0; }
  /// [F_tilde; G], the full penalty matrix of the augmented Lagrangian.
  Eigen::MatrixXd stacked_F() const;
};

/// Upper bound used for the collision ratio d_o ("some large number").
inline constexpr double kCollisionRatioMax = 1e6;

/// Builds the reformulated constraint stack. The dense F_tilde and G blocks
/// are only needed by diagnostics and tests; hot paths that rebuild scenes
/// every cycle can skip them.
SceneConstraints reformulate_constraints(const SceneGeometry& geom,
                                         const BasisMatrices& basis,
                                         bool build_matrices = true);

/// Max violation per constraint family, evaluated directly on the sampled
/// trajectory (independent of the polar reformulation).
struct ResidualReport {
  double collision = 0.0;
  double velocity = 0.0;
  double acceleration = 0.0;
  double lane = 0.0;

  double max() const;
  double sum() const { return collision + velocity + acceleration + lane; }
};

ResidualReport residuals(const TrajectoryCoeffs& xi_bar,
                         const SceneConstraints& scene);

/// Per-sample alternating-minimization state.
struct ProjectionState {
  Eigen::VectorXd xi_bar;
  Eigen::VectorXd lambda;              // multiplier, xi-space
  Eigen::VectorXd alpha_obs, d_obs;    // n_obs*n_steps
  Eigen::VectorXd alpha_v, d_v;        // n_steps
  Eigen::VectorXd alpha_a, d_a;        // n_steps
  Eigen::VectorXd s;                   // 2*n_steps lane slack
  Eigen::VectorXd e;                   // stacked target vector
  std::vector<double> residual_trace;  // max residual after each iteration
};

/// Taped handles for one unrolled projection pass.
struct UnrolledProjection {
  std::vector<ad::Var> stages;  // xi_bar after each (h, QP) pair
  ad::Var xi_bar;               // == stages.back()
  ad::Var lambda;               // final multiplier
};

struct ProjectOptions {
  int max_iters = 100;
  bool record_trace = true;
};

/// Projects QP solutions onto the feasible set by unrolling the fixed-point
/// alternation of closed-form block updates and prefactored KKT solves.
///
/// The KKT matrix depends on the obstacle slot count and ellipse axes but
/// not on obstacle positions or bound values, so one factorization (done at
/// construction) serves every scene with the same structure: positions and
/// bounds enter only through the right-hand side.
class ProjectionSolver {
 public:
  /// dual_step scales the multiplier update (over-stepped ascent) and
  /// over_relax extrapolates the solved iterate; both leave fixed points
  /// fixed and combined they roughly halve the iterations the slow tail of
  /// cold-started samples needs.
  ProjectionSolver(const BasisMatrices& basis, int n_obs, double ellipse_a,
                   double ellipse_b, const Eigen::MatrixXd& A, double rho = 2.0,
                   double dual_step = 1.9, double over_relax = 1.3);

  /// Convenience: structure taken from an existing scene.
  ProjectionSolver(const SceneConstraints& scene, const Eigen::MatrixXd& A,
                   double rho = 2.0, double dual_step = 1.9,
                   double over_relax = 1.3);

  const qp::KktFactor& factor() const { return factor_; }
  double rho() const { return rho_; }
  double dual_step() const { return dual_step_; }
  double over_relax() const { return over_relax_; }
  int n_obs() const { return n_obs_; }
  const Eigen::MatrixXd& equality_matrix() const { return A_; }

  /// One closed-form block update (alpha, d, s, lambda, e) at state.xi_bar.
  /// Leaves state.xi_bar untouched.
  void h_update(ProjectionState& state, const SceneConstraints& scene) const;

  /// Appends K alternations to the tape. xi_star, lambda0, xi_bar0 and b_eq
  /// may be inputs (differentiable) or constants.
  UnrolledProjection unroll(ad::Tape& tape, const SceneConstraints& scene,
                            ad::Var xi_star, ad::Var lambda0, ad::Var xi_bar0,
                            ad::Var b_eq, int iters) const;

  using Options = ProjectOptions;

  /// Batched projection; per-sample results are independent of batch
  /// composition. b_batch holds the equality right-hand sides b(p). Empty
  /// init batches default to xi_bar0 = xi_star, lambda0 = 0.
  std::vector<ProjectionState> project(
      const std::vector<TrajectoryCoeffs>& xi_star_batch,
      const std::vector<Eigen::VectorXd>& b_batch,
      const SceneConstraints& scene,
      const std::vector<Eigen::VectorXd>& lambda_init_batch = {},
      const std::vector<TrajectoryCoeffs>& xi_bar_init_batch = {},
      const Options& opts = Options()) const;

  ProjectionState project_one(const TrajectoryCoeffs& xi_star,
                              const Eigen::VectorXd& b_eq,
                              const SceneConstraints& scene,
                              const Options& opts = Options()) const;

 private:
  void check_scene(const SceneConstraints& scene) const;

  const BasisMatrices* basis_;
  int n_obs_;
  double a_, b_;
  Eigen::MatrixXd A_;
  double rho_;
  double dual_step_;
  double over_relax_;
  qp::KktFactor factor_;
};

}  // namespace densedrive
