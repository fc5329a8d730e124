#include "densedrive/planner.hpp"

#include <stdexcept>

namespace densedrive {

Eigen::VectorXd BehavioralInput::flat() const {
  Eigen::VectorXd p(y_d.size() + v_d.size());
  p << y_d, v_d;
  return p;
}

BehavioralInput BehavioralInput::from_flat(const Eigen::VectorXd& p) {
  if (p.size() % 2 != 0)
    throw std::invalid_argument("BehavioralInput: flat vector must be [y_d; v_d]");
  const int m = static_cast<int>(p.size()) / 2;
  BehavioralInput b;
  b.y_d = p.head(m);
  b.v_d = p.tail(m);
  return b;
}

Eigen::VectorXd BehaviorBounds::lower(int m_seg) const {
  Eigen::VectorXd lo(2 * m_seg);
  lo.head(m_seg).setConstant(y_lo);
  lo.tail(m_seg).setConstant(v_lo);
  return lo;
}

Eigen::VectorXd BehaviorBounds::upper(int m_seg) const {
  Eigen::VectorXd hi(2 * m_seg);
  hi.head(m_seg).setConstant(y_hi);
  hi.tail(m_seg).setConstant(v_hi);
  return hi;
}

void PlannerWeights::validate() const {
  if (w_smooth < 0 || w_lateral < 0 || w_velocity < 0)
    throw std::invalid_argument("PlannerWeights: weights must be nonnegative");
  if (kappa_p <= 0 || kappa_v <= 0)
    throw std::invalid_argument(
        "PlannerWeights: tracking gains must be positive for a convergent law");
}

Eigen::MatrixXd segment_selector(int n_steps, int m_seg) {
  if (m_seg < 1) throw std::invalid_argument("segment_selector: m_seg >= 1");
  if (n_steps % m_seg != 0)
    throw std::invalid_argument(
        "segment_selector: n_steps must be divisible by m_seg");
  const int per = n_steps / m_seg;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n_steps, m_seg);
  for (int s = 0; s < m_seg; ++s)
    S.block(s * per, s, per, 1).setOnes();
  return S;
}

namespace {

struct CostBlocks {
  Eigen::MatrixXd Q;    // 2m x 2m
  Eigen::MatrixXd Jq;   // 2m x 2*m_seg, q = Jq * [y_d; v_d]
};

CostBlocks cost_blocks(const PlannerWeights& w, const BasisMatrices& basis,
                       int m_seg) {
  w.validate();
  const int m = basis.n_coef();
  const int n = basis.n_steps();
  const Eigen::MatrixXd S = segment_selector(n, m_seg);

  // Stable PD tracking: (ydd + kp (y - y_d) + kv yd)^2 and
  // (xdd + kp (xd - v_d))^2.
  const Eigen::MatrixXd Bl = basis.Wdd + w.kappa_p * basis.W + w.kappa_v * basis.Wd;
  const Eigen::MatrixXd Bv = basis.Wdd + w.kappa_p * basis.Wd;

  Eigen::MatrixXd Qx = 2.0 * w.w_smooth * basis.Wdd.transpose() * basis.Wdd +
                       2.0 * w.w_velocity * Bv.transpose() * Bv;
  Eigen::MatrixXd Qy = 2.0 * w.w_smooth * basis.Wdd.transpose() * basis.Wdd +
                       2.0 * w.w_lateral * Bl.transpose() * Bl;

  CostBlocks out;
  out.Q = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  out.Q.topLeftCorner(m, m) = Qx;
  out.Q.bottomRightCorner(m, m) = Qy;

  out.Jq = Eigen::MatrixXd::Zero(2 * m, 2 * m_seg);
  // y_d enters the lateral tracking target on the y block.
  out.Jq.block(m, 0, m, m_seg) =
      -2.0 * w.w_lateral * w.kappa_p * Bl.transpose() * S;
  // v_d enters the velocity tracking target on the x block.
  out.Jq.block(0, m_seg, m, m_seg) =
      -2.0 * w.w_velocity * w.kappa_p * Bv.transpose() * S;
  return out;
}

}  // namespace

Eigen::MatrixXd equality_matrix(const BoundaryConditions& bc,
                                const BasisMatrices& basis) {
  const int m = basis.n_coef();
  const int last = basis.n_steps() - 1;
  int rows = 6;
  if (bc.terminal_mode == TerminalMode::kAccelZero) rows += 2;
  if (bc.terminal_mode == TerminalMode::kFullPterm) rows += 6;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, 2 * m);
  auto put = [&](int row, int axis, const Eigen::MatrixXd& basis_mat, int grid_row) {
    A.block(row, axis * m, 1, m) = basis_mat.row(grid_row);
  };
  // initial state, r = {0, 1, 2} per axis
  put(0, 0, basis.W, 0);
  put(1, 0, basis.Wd, 0);
  put(2, 0, basis.Wdd, 0);
  put(3, 1, basis.W, 0);
  put(4, 1, basis.Wd, 0);
  put(5, 1, basis.Wdd, 0);
  if (bc.terminal_mode == TerminalMode::kAccelZero) {
    put(6, 0, basis.Wdd, last);
    put(7, 1, basis.Wdd, last);
  } else if (bc.terminal_mode == TerminalMode::kFullPterm) {
    put(6, 0, basis.W, last);
    put(7, 0, basis.Wd, last);
    put(8, 0, basis.Wdd, last);
    put(9, 1, basis.W, last);
    put(10, 1, basis.Wd, last);
    put(11, 1, basis.Wdd, last);
  }
  return A;
}

Eigen::VectorXd equality_rhs(const BehavioralInput& p,
                             const BoundaryConditions& bc,
                             const BasisMatrices& basis) {
  (void)basis;
  int rows = 6;
  if (bc.terminal_mode == TerminalMode::kAccelZero) rows += 2;
  if (bc.terminal_mode == TerminalMode::kFullPterm) rows += 6;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
  // b0 = (x, y, xd, yd, xdd, ydd); rows are grouped per axis.
  b(0) = bc.b0(0);
  b(1) = bc.b0(2);
  b(2) = bc.b0(4);
  b(3) = bc.b0(1);
  b(4) = bc.b0(3);
  b(5) = bc.b0(5);
  if (bc.terminal_mode == TerminalMode::kFullPterm) {
    if (!p.p_term)
      throw std::invalid_argument("equality_rhs: full_pterm requires p_term");
    const auto& pt = *p.p_term;  // (x_f, y_f, xd_f, yd_f, xdd_f, ydd_f)
    b(6) = pt(0);
    b(7) = pt(2);
    b(8) = pt(4);
    b(9) = pt(1);
    b(10) = pt(3);
    b(11) = pt(5);
  }
  return b;
}

QpProblem build_qp(const BehavioralInput& p, const BoundaryConditions& bc,
                   const PlannerWeights& w, const BasisMatrices& basis) {
  const int m_seg = p.n_segments();
  if (m_seg < 1 || p.v_d.size() != m_seg)
    throw std::invalid_argument("build_qp: y_d and v_d must have equal length >= 1");
  const CostBlocks cb = cost_blocks(w, basis, m_seg);
  QpProblem out;
  out.Q = cb.Q;
  out.q = cb.Jq * p.flat();
  out.A = equality_matrix(bc, basis);
  out.b = equality_rhs(p, bc, basis);
  return out;
}

Planner::Planner(const BasisMatrices& basis, int m_seg,
                 const PlannerWeights& w, TerminalMode terminal_mode)
    : basis_(&basis), m_seg_(m_seg), w_(w), terminal_mode_(terminal_mode) {
  const CostBlocks cb = cost_blocks(w, basis, m_seg);
  Q_ = cb.Q;
  Jq_ = cb.Jq;
  BoundaryConditions bc;
  bc.terminal_mode = terminal_mode;
  A_ = equality_matrix(bc, basis);
  factor_ = qp::prefactor(Q_, A_);
}

Eigen::VectorXd Planner::rhs(const BehavioralInput& p,
                             const BoundaryConditions& bc) const {
  if (bc.terminal_mode != terminal_mode_)
    throw std::invalid_argument("Planner: terminal mode differs from factored geometry");
  Eigen::VectorXd eta(factor_.n_total());
  eta.head(factor_.n_primal()) = -(Jq_ * p.flat());
  eta.tail(factor_.n_eq()) = equality_rhs(p, bc, *basis_);
  return eta;
}

TrajectoryCoeffs Planner::plan(const BehavioralInput& p,
                               const BoundaryConditions& bc) const {
  if (p.n_segments() != m_seg_)
    throw std::invalid_argument("Planner: segment count mismatch");
  return factor_.solve(rhs(p, bc)).head(factor_.n_primal());
}

std::vector<TrajectoryCoeffs> Planner::plan_batch(
    const std::vector<BehavioralInput>& p_batch,
    const BoundaryConditions& bc) const {
  std::vector<TrajectoryCoeffs> out;
  out.reserve(p_batch.size());
  for (const auto& p : p_batch) out.push_back(plan(p, bc));
  return out;
}

}  // namespace densedrive
