#include <doctest.h>

#include "densedrive/qpcore.hpp"
#include "support/fixtures.hpp"

using namespace densedrive;
using ddtest::random_vector;

TEST_SUITE_BEGIN("qpcore");

namespace {

Eigen::MatrixXd random_matrix(int r, int c, std::uint64_t seed) {
  rng::Engine eng(seed);
  Eigen::MatrixXd M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = eng.normal();
  return M;
}

}  // namespace

TEST_CASE("hyperplane projection closed form") {
  // F = 0 and one equality row: the solve must reproduce
  // xi - A^T (A A^T)^-1 (A xi - b).
  const int n = 8;
  const Eigen::MatrixXd F = Eigen::MatrixXd::Zero(1, n);
  const Eigen::MatrixXd A = random_matrix(1, n, 5);
  const auto factor = qp::prefactor_kkt(F, A, 1.0);

  const Eigen::VectorXd xi = random_vector(n, 6);
  const double b = 2.5;
  Eigen::VectorXd eta(n + 1);
  eta << xi, b;
  const Eigen::VectorXd sol = factor.solve(eta).head(n);

  const double denom = (A * A.transpose())(0, 0);
  const Eigen::VectorXd expect =
      xi - A.transpose() * (((A * xi)(0) - b) / denom);
  CHECK((sol - expect).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("vanishing penalty matches F = 0") {
  const int n = 8;
  const Eigen::MatrixXd F = random_matrix(12, n, 9);
  const Eigen::MatrixXd A = random_matrix(2, n, 10);
  const auto f_zero = qp::prefactor_kkt(Eigen::MatrixXd::Zero(1, n), A, 1.0);
  const auto f_eps = qp::prefactor_kkt(F, A, 1e-12);
  Eigen::VectorXd eta(n + 2);
  eta << random_vector(n, 11), 0.3, -0.7;
  CHECK((f_zero.solve(eta) - f_eps.solve(eta)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("factor inverts the KKT matrix") {
  const int n = 10;
  const Eigen::MatrixXd F = random_matrix(20, n, 21);
  const Eigen::MatrixXd A = random_matrix(3, n, 22);
  const auto factor = qp::prefactor_kkt(F, A, 0.8);
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd probe = random_vector(n + 3, 100 + k);
    const Eigen::VectorXd back = factor.kkt_matrix() * factor.solve(probe);
    CHECK((back - probe).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("rank-deficient equality block rejected") {
  const int n = 6;
  Eigen::MatrixXd A(2, n);
  A.row(0) = random_vector(n, 31).transpose();
  A.row(1) = 2.0 * A.row(0);  // duplicate boundary row
  CHECK_THROWS_AS(qp::prefactor(Eigen::MatrixXd::Identity(n, n), A, 0.0),
                  qp::SolverError);
  CHECK_THROWS_WITH_AS(
      qp::prefactor(Eigen::MatrixXd::Identity(n, n), A, 0.0),
      doctest::Contains("equality block"), qp::SolverError);
}

TEST_CASE("batch equals sequential, order preserved") {
  const int n = 12;
  const Eigen::MatrixXd F = random_matrix(30, n, 41);
  const Eigen::MatrixXd A = random_matrix(4, n, 42);
  const auto factor = qp::prefactor_kkt(F, A, 1.0);

  std::vector<Eigen::VectorXd> batch;
  for (int j = 0; j < 256; ++j) batch.push_back(random_vector(n + 4, 500 + j));
  const auto out = qp::batch_affine_solve(factor, batch);
  REQUIRE(out.size() == batch.size());
  double worst = 0.0;
  for (int j = 0; j < 256; ++j) {
    const Eigen::VectorXd single = factor.solve(batch[j]);
    worst = std::max(worst,
                     (out[j].xi - single.head(n)).cwiseAbs().maxCoeff());
    worst = std::max(worst,
                     (out[j].nu - single.tail(4)).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-10);

  SUBCASE("single-element batch is bit-identical") {
    const auto one = qp::batch_affine_solve(factor, {batch[0]});
    const Eigen::VectorXd direct = factor.solve(batch[0]);
    CHECK((one[0].xi - direct.head(n)).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("permutation permutes outputs identically") {
    std::vector<Eigen::VectorXd> rev(batch.rbegin(), batch.rend());
    const auto out_rev = qp::batch_affine_solve(factor, rev);
    for (int j = 0; j < 256; ++j)
      CHECK((out_rev[255 - j].xi - out[j].xi).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("primal satisfies the equality constraints") {
  const int n = 12;
  const Eigen::MatrixXd F = random_matrix(18, n, 51);
  const Eigen::MatrixXd A = random_matrix(5, n, 52);
  const auto factor = qp::prefactor_kkt(F, A, 2.0);
  for (int j = 0; j < 20; ++j) {
    Eigen::VectorXd eta = random_vector(n + 5, 700 + j);
    const Eigen::VectorXd xi = factor.solve(eta).head(n);
    CHECK((A * xi - eta.tail(5)).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("factorization counter advances only on prefactor") {
  const auto before = qp::kkt_stats();
  const Eigen::MatrixXd F = random_matrix(10, 6, 61);
  const Eigen::MatrixXd A = random_matrix(2, 6, 62);
  const auto factor = qp::prefactor_kkt(F, A, 1.0);
  const auto mid = qp::kkt_stats();
  CHECK(mid.factorizations == before.factorizations + 1);
  for (int j = 0; j < 50; ++j) factor.solve(random_vector(8, 800 + j));
  const auto after = qp::kkt_stats();
  CHECK(after.factorizations == mid.factorizations);
  CHECK(after.solves == mid.solves + 50);
}

TEST_SUITE_END();
