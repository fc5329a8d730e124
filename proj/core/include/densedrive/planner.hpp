#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "densedrive/basis.hpp"
#include "densedrive/qpcore.hpp"

namespace densedrive {

/// Segment-wise lateral offset and speed set-points, optional terminal state.
struct BehavioralInput {
  Eigen::VectorXd y_d;  // meters, one per segment
  Eigen::VectorXd v_d;  // m/s, one per segment
  std::optional<Eigen::Vector<double, 6>> p_term;  // (x, y, xd, yd, xdd, ydd)

  int n_segments() const { return static_cast<int>(y_d.size()); }

  /// Flat parameter vector [y_d; v_d] used by samplers and policies.
  Eigen::VectorXd flat() const;
  static BehavioralInput from_flat(const Eigen::VectorXd& p);
};

/// Valid ranges for the flat behavioral-input vector; used to clamp sampler
/// draws and to squash policy outputs.
struct BehaviorBounds {
  double y_lo = 0.0;
  double y_hi = 0.0;
  double v_lo = 0.0;
  double v_hi = 0.0;

  Eigen::VectorXd lower(int m_seg) const;
  Eigen::VectorXd upper(int m_seg) const;
};

enum class TerminalMode { kFree, kAccelZero, kFullPterm };

struct BoundaryConditions {
  Eigen::Vector<double, 6> b0 =
      Eigen::Vector<double, 6>::Zero();  // (x, y, xd, yd, xdd, ydd) at t0
  TerminalMode terminal_mode = TerminalMode::kAccelZero;
};

struct PlannerWeights {
  // near-critically damped tracking; hotter gains demand accelerations far
  // beyond a_max and leave the projection fighting the anchor
  double kappa_p = 0.7;
  double kappa_v = 1.7;
  double w_smooth = 1.0;
  double w_lateral = 10.0;
  double w_velocity = 10.0;

  void validate() const;
};

struct QpProblem {
  Eigen::MatrixXd Q;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

/// Expansion matrix mapping one value per segment to one value per grid row.
Eigen::MatrixXd segment_selector(int n_steps, int m_seg);

/// Assembles the tracking QP for one behavioral input. Q and A depend only
/// on geometry and weights; all p-dependence lives in q and b.
QpProblem build_qp(const BehavioralInput& p, const BoundaryConditions& bc,
                   const PlannerWeights& w, const BasisMatrices& basis);

/// Equality rows for the boundary conditions; value-independent geometry.
Eigen::MatrixXd equality_matrix(const BoundaryConditions& bc,
                                const BasisMatrices& basis);
Eigen::VectorXd equality_rhs(const BehavioralInput& p,
                             const BoundaryConditions& bc,
                             const BasisMatrices& basis);

/// Holds the prefactored KKT system of the tracking QP for a fixed
/// (basis, segment count, weights, terminal mode) geometry. b0 and p enter
/// only through the right-hand side, so one factorization serves a whole
/// run.
class Planner {
 public:
  Planner(const BasisMatrices& basis, int m_seg, const PlannerWeights& w,
          TerminalMode terminal_mode);

  /// Linear map from the flat p vector to the cost gradient q(p).
  const Eigen::MatrixXd& q_of_p() const { return Jq_; }
  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::MatrixXd& Q() const { return Q_; }
  const qp::KktFactor& factor() const { return factor_; }
  int m_seg() const { return m_seg_; }
  const BasisMatrices& basis() const { return *basis_; }
  TerminalMode terminal_mode() const { return terminal_mode_; }

  Eigen::VectorXd rhs(const BehavioralInput& p,
                      const BoundaryConditions& bc) const;

  /// Solves the QP for every sample; all samples share bc and weights.
  std::vector<TrajectoryCoeffs> plan_batch(
      const std::vector<BehavioralInput>& p_batch,
      const BoundaryConditions& bc) const;

  TrajectoryCoeffs plan(const BehavioralInput& p,
                        const BoundaryConditions& bc) const;

 private:
  const BasisMatrices* basis_;
  int m_seg_;
  PlannerWeights w_;
  TerminalMode terminal_mode_;
  Eigen::MatrixXd Q_;
  Eigen::MatrixXd A_;
  Eigen::MatrixXd Jq_;   // q = Jq * [y_d; v_d]
  qp::KktFactor factor_;
};

}  // namespace densedrive
