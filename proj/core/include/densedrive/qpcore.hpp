#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace densedrive::qp {

/// Raised when a KKT system cannot be factorized or solved.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KktStats {
  std::uint64_t factorizations = 0;
  std::uint64_t solves = 0;
};

/// Process-wide counters. Training and inference loops are expected to leave
/// `factorizations` untouched; tests assert on the difference.
KktStats kkt_stats();

/// Prefactored symmetric KKT system
///
///   [ H   A^T ] [ xi ]   [ eta_1 ]
///   [ A   0   ] [ nu ] = [ eta_2 ]
///
/// Factor once, solve as many right-hand sides as needed.
class KktFactor {
 public:
  KktFactor() = default;

  int n_primal() const { return n_primal_; }
  int n_eq() const { return n_eq_; }
  int n_total() const { return n_primal_ + n_eq_; }
  double rho() const { return rho_; }
  bool valid() const { return n_primal_ > 0; }

  /// Solves for one stacked right-hand side [eta_1; eta_2].
  Eigen::VectorXd solve(const Eigen::VectorXd& eta) const;

  /// Dense copy of the KKT matrix (diagnostics and tests).
  const Eigen::MatrixXd& kkt_matrix() const { return kkt_; }

 private:
  friend KktFactor prefactor(const Eigen::MatrixXd& H, const Eigen::MatrixXd& A,
                             double rho);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  Eigen::MatrixXd kkt_;
  int n_primal_ = 0;
  int n_eq_ = 0;
  double rho_ = 0.0;
};

/// Factorizes [[H, A^T], [A, 0]]. H must be symmetric, A full row rank.
/// Throws SolverError naming the deficient block otherwise.
KktFactor prefactor(const Eigen::MatrixXd& H, const Eigen::MatrixXd& A,
                    double rho = 0.0);

/// Factorizes the penalty form [[I + rho F^T F, A^T], [A, 0]].
KktFactor prefactor_kkt(const Eigen::MatrixXd& F, const Eigen::MatrixXd& A,
                        double rho);

struct QpSolution {
  Eigen::VectorXd xi;  // primal
  Eigen::VectorXd nu;  // equality duals
};

/// Solves one factored system per right-hand side; output order matches
/// input order and equals per-sample sequential solves exactly.
std::vector<QpSolution> batch_affine_solve(
    const KktFactor& factor, const std::vector<Eigen::VectorXd>& eta_batch);

}  // namespace densedrive::qp
