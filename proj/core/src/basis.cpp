#include "densedrive/basis.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace densedrive {

void TimeGrid::validate() const {
  if (!(tf > t0)) throw std::invalid_argument("TimeGrid: tf must exceed t0");
  if (n_steps < 2) throw std::invalid_argument("TimeGrid: n_steps must be >= 2");
  if (!std::isfinite(t0) || !std::isfinite(tf))
    throw std::invalid_argument("TimeGrid: bounds must be finite");
}

namespace {

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Bernstein row of degree deg at normalized time s (valid for any real s).
void bernstein_row(int deg, double s, double* out) {
  for (int j = 0; j <= deg; ++j)
    out[j] = binom(deg, j) * std::pow(s, j) * std::pow(1.0 - s, deg - j);
}

}  // namespace

BasisMatrices build_basis(int order, const TimeGrid& grid) {
  grid.validate();
  if (order < 2) throw std::invalid_argument("build_basis: order must be >= 2");

  const int n = grid.n_steps;
  const int m = order + 1;
  BasisMatrices b;
  b.order = order;
  b.grid = grid;
  b.W.setZero(n, m);
  b.Wd.setZero(n, m);
  b.Wdd.setZero(n, m);

  const double tf = grid.tf;
  std::vector<double> row(m), row1(m), row2(m);
  for (int i = 0; i < n; ++i) {
    const double s = grid.at(i) / tf;
    bernstein_row(order, s, row.data());
    bernstein_row(order - 1, s, row1.data());
    bernstein_row(order - 2, s, row2.data());
    for (int j = 0; j < m; ++j) b.W(i, j) = row[j];
    // d/ds B_{j,n} = n (B_{j-1,n-1} - B_{j,n-1}); chain factor 1/tf
    for (int j = 0; j < m; ++j) {
      double d1 = 0.0;
      if (j >= 1) d1 += order * row1[j - 1];
      if (j <= order - 1) d1 -= order * row1[j];
      b.Wd(i, j) = d1 / tf;
      double d2 = 0.0;
      const double c2 = static_cast<double>(order) * (order - 1);
      if (j >= 2) d2 += c2 * row2[j - 2];
      if (j >= 1 && j <= order - 1) d2 -= 2.0 * c2 * row2[j - 1];
      if (j <= order - 2) d2 += c2 * row2[j];
      b.Wdd(i, j) = d2 / (tf * tf);
    }
  }
  return b;
}

SampledTrajectory eval_trajectory(const TrajectoryCoeffs& xi,
                                  const BasisMatrices& basis, int deriv) {
  const int m = basis.n_coef();
  if (xi.size() != 2 * m)
    throw std::invalid_argument("eval_trajectory: coefficient length mismatch");
  const Eigen::MatrixXd* M = nullptr;
  switch (deriv) {
    case 0: M = &basis.W; break;
    case 1: M = &basis.Wd; break;
    case 2: M = &basis.Wdd; break;
    default:
      throw std::invalid_argument("eval_trajectory: deriv must be 0, 1 or 2");
  }
  return {*M * xi.head(m), *M * xi.tail(m)};
}

double eval_poly(const Eigen::VectorXd& axis_coeffs, double tf, double t,
                 int deriv) {
  if (deriv < 0 || deriv > 2)
    throw std::invalid_argument("eval_poly: deriv must be 0, 1 or 2");
  const int deg = static_cast<int>(axis_coeffs.size()) - 1;
  const double s = t / tf;
  // differentiate the control polygon, then run de Casteljau
  std::vector<double> c(axis_coeffs.data(), axis_coeffs.data() + deg + 1);
  int d = deg;
  double chain = 1.0;
  for (int r = 0; r < deriv; ++r) {
    for (int j = 0; j < d; ++j) c[j] = d * (c[j + 1] - c[j]);
    c.resize(d);
    --d;
    chain /= tf;
  }
  for (int r = d; r >= 1; --r)
    for (int j = 0; j < r; ++j) c[j] = (1.0 - s) * c[j] + s * c[j + 1];
  return c[0] * chain;
}

Eigen::MatrixXd time_shift_matrix(const BasisMatrices& basis, double delta) {
  // shift exactly by conjugating the monomial Taylor shift with the
  // Bernstein-to-monomial change of basis
  const int m = basis.n_coef();
  const int deg = basis.order;
  const double ds = delta / basis.grid.tf;

  // B_{j,deg}(s) = sum_k C(deg,j) C(deg-j, k-j) (-1)^(k-j) s^k
  Eigen::MatrixXd to_mono = Eigen::MatrixXd::Zero(m, m);
  for (int j = 0; j < m; ++j)
    for (int k = j; k < m; ++k)
      to_mono(k, j) =
          binom(deg, j) * binom(deg - j, k - j) * ((k - j) % 2 ? -1.0 : 1.0);

  // Taylor shift on monomial coefficients: (s + ds)^k expansion
  Eigen::MatrixXd shift_mono = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k < m; ++k) {
    double pw = 1.0;
    for (int j = k; j >= 0; --j) {
      shift_mono(j, k) = binom(k, j) * pw;
      pw *= ds;
    }
  }
  return to_mono.partialPivLu().solve(shift_mono * to_mono);
}

}  // namespace densedrive
