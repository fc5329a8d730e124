#include "densedrive/qpcore.hpp"

#include <atomic>

namespace densedrive::qp {

namespace {
std::atomic<std::uint64_t> g_factorizations{0};
std::atomic<std::uint64_t> g_solves{0};
}  // namespace

KktStats kkt_stats() {
  return {g_factorizations.load(), g_solves.load()};
}

Eigen::VectorXd KktFactor::solve(const Eigen::VectorXd& eta) const {
  if (!valid()) throw SolverError("KktFactor: solve on unfactored system");
  if (eta.size() != n_total())
    throw std::invalid_argument("KktFactor: rhs length mismatch");
  g_solves.fetch_add(1, std::memory_order_relaxed);
  Eigen::VectorXd z = lu_.solve(eta);
  // one iterative refinement step keeps the residual near machine precision
  // even when the cost blocks are badly scaled
  z += lu_.solve(eta - kkt_ * z);
  return z;
}

KktFactor prefactor(const Eigen::MatrixXd& H, const Eigen::MatrixXd& A,
                    double rho) {
  const int n = static_cast<int>(H.rows());
  const int m = static_cast<int>(A.rows());
  if (H.cols() != n) throw std::invalid_argument("prefactor: H must be square");
  if (m > 0 && A.cols() != n)
    throw std::invalid_argument("prefactor: A column count must match H");
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + H.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("prefactor: H must be symmetric");

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = H;
  if (m > 0) {
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
  }

  // Rank checks up front so a singular system names its deficient block.
  if (m > 0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lua(A);
    if (lua.rank() < m)
      throw SolverError("prefactor: equality block A is rank-deficient");
  }
  Eigen::FullPivLU<Eigen::MatrixXd> luk(K);
  if (!luk.isInvertible())
    throw SolverError("prefactor: KKT matrix singular (H not positive definite "
                      "on the nullspace of A)");

  KktFactor f;
  f.kkt_ = K;
  f.lu_.compute(K);
  f.n_primal_ = n;
  f.n_eq_ = m;
  f.rho_ = rho;
  g_factorizations.fetch_add(1, std::memory_order_relaxed);
  return f;
}

KktFactor prefactor_kkt(const Eigen::MatrixXd& F, const Eigen::MatrixXd& A,
                        double rho) {
  if (rho <= 0.0) throw std::invalid_argument("prefactor_kkt: rho must be > 0");
  const int n = static_cast<int>(F.cols()) > 0 ? static_cast<int>(F.cols())
                                               : static_cast<int>(A.cols());
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  if (F.size() > 0) H += rho * (F.transpose() * F);
  return prefactor(H, A, rho);
}

std::vector<QpSolution> batch_affine_solve(
    const KktFactor& factor, const std::vector<Eigen::VectorXd>& eta_batch) {
  std::vector<QpSolution> out;
  out.reserve(eta_batch.size());
  for (const auto& eta : eta_batch) {
    Eigen::VectorXd z = factor.solve(eta);
    out.push_back({z.head(factor.n_primal()), z.tail(factor.n_eq())});
  }
  return out;
}

}  // namespace densedrive::qp
