#include <doctest.h>

#include "support/fixtures.hpp"

using namespace densedrive;
using ddtest::make_basis;
using ddtest::random_xi;

TEST_SUITE_BEGIN("basis");

TEST_CASE("shape matches order and grid") {
  const auto b = build_basis(10, TimeGrid{0.0, 10.0, 100});
  CHECK(b.W.rows() == 100);
  CHECK(b.W.cols() == 11);
  CHECK(b.Wd.rows() == 100);
  CHECK(b.Wdd.cols() == 11);
}

TEST_CASE("invalid parameters rejected") {
  CHECK_THROWS_AS(build_basis(1, TimeGrid{0, 10, 100}), std::invalid_argument);
  CHECK_THROWS_AS(build_basis(10, TimeGrid{0, 10, 1}), std::invalid_argument);
  CHECK_THROWS_AS(build_basis(10, TimeGrid{5, 5, 100}), std::invalid_argument);
}

TEST_CASE("constant control polygon has zero derivatives") {
  // the basis forms a partition of unity, so all-equal control points are a
  // constant trajectory
  const auto b = make_basis();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(b.n_coef());
  CHECK(((b.W * ones).array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK((b.Wd * ones).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((b.Wdd * ones).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("linear-in-time control points differentiate to one") {
  // x(t) = t has control points tf * j / order
  const auto b = make_basis(100, 10, 10.0);
  Eigen::VectorXd c(b.n_coef());
  for (int j = 0; j < b.n_coef(); ++j)
    c(j) = b.grid.tf * j / static_cast<double>(b.order);
  const Eigen::VectorXd xd = b.Wd * c;
  CHECK((xd.array() - 1.0).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("derivative matrices consistent with finite differences") {
  const auto b = build_basis(10, TimeGrid{0.0, 10.0, 1000});
  const auto xi = random_xi(b, 7);
  const auto pos = eval_trajectory(xi, b, 0);
  const auto vel = eval_trajectory(xi, b, 1);
  const double dt = b.grid.dt();
  double worst = 0.0, scale = std::max(1.0, vel.x.cwiseAbs().maxCoeff());
  for (int i = 1; i + 1 < b.n_steps(); ++i) {
    const double fd = (pos.x(i + 1) - pos.x(i - 1)) / (2 * dt);
    worst = std::max(worst, std::abs(fd - vel.x(i)));
  }
  CHECK(worst / scale <= 1e-3);

  const auto acc = eval_trajectory(xi, b, 2);
  double worst2 = 0.0, scale2 = std::max(1.0, acc.y.cwiseAbs().maxCoeff());
  for (int i = 1; i + 1 < b.n_steps(); ++i) {
    const double fd = (vel.y(i + 1) - vel.y(i - 1)) / (2 * dt);
    worst2 = std::max(worst2, std::abs(fd - acc.y(i)));
  }
  CHECK(worst2 / scale2 <= 1e-3);
}

TEST_CASE("evaluation is linear in coefficients") {
  const auto b = make_basis();
  const auto x1 = random_xi(b, 1), x2 = random_xi(b, 2);
  const double al = 0.7, be = -1.3;
  for (int d = 0; d <= 2; ++d) {
    const auto lhs = eval_trajectory(al * x1 + be * x2, b, d);
    const auto r1 = eval_trajectory(x1, b, d);
    const auto r2 = eval_trajectory(x2, b, d);
    CHECK((lhs.x - (al * r1.x + be * r2.x)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((lhs.y - (al * r1.y + be * r2.y)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("zero and constant coefficients") {
  const auto b = make_basis();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2 * b.n_coef());
  for (int d = 0; d <= 2; ++d) {
    const auto r = eval_trajectory(zero, b, d);
    CHECK(r.x.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.y.cwiseAbs().maxCoeff() == 0.0);
  }
  Eigen::VectorXd c = zero;
  c.head(b.n_coef()).setConstant(3.5);  // constant x position
  CHECK((eval_trajectory(c, b, 0).x.array() - 3.5).abs().maxCoeff() <= 1e-12);
  CHECK(eval_trajectory(c, b, 1).x.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("eval_poly matches grid sampling") {
  const auto b = make_basis(100, 10, 10.0);
  const auto xi = random_xi(b, 11);
  const auto pos = eval_trajectory(xi, b, 0);
  const auto acc = eval_trajectory(xi, b, 2);
  const Eigen::VectorXd cx = xi.head(b.n_coef());
  for (int i : {0, 17, 63, 99}) {
    CHECK(eval_poly(cx, b.grid.tf, b.grid.at(i), 0) ==
          doctest::Approx(pos.x(i)).epsilon(1e-12));
    CHECK(eval_poly(cx, b.grid.tf, b.grid.at(i), 2) ==
          doctest::Approx(acc.x(i)).epsilon(1e-10));
  }
}

TEST_CASE("time shift reproduces shifted samples") {
  const auto b = make_basis(100, 10, 10.0);
  const auto xi = random_xi(b, 3);
  const Eigen::VectorXd cx = xi.head(b.n_coef());
  const double delta = 0.4;
  const Eigen::MatrixXd S = time_shift_matrix(b, delta);
  const Eigen::VectorXd cs = S * cx;
  for (double t : {0.0, 1.1, 4.2, 8.0}) {
    CHECK(eval_poly(cs, b.grid.tf, t, 0) ==
          doctest::Approx(eval_poly(cx, b.grid.tf, t + delta, 0))
              .epsilon(1e-9));
  }
}

TEST_SUITE_END();
