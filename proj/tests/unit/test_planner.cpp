#include <doctest.h>

#include "densedrive/planner.hpp"
#include "support/fixtures.hpp"

using namespace densedrive;
using ddtest::make_basis;

TEST_SUITE_BEGIN("planner");

namespace {

BehavioralInput make_p(int m_seg, double y, double v) {
  BehavioralInput p;
  p.y_d = Eigen::VectorXd::Constant(m_seg, y);
  p.v_d = Eigen::VectorXd::Constant(m_seg, v);
  return p;
}

BoundaryConditions cruising_bc(double y0, double v0) {
  BoundaryConditions bc;
  bc.b0 << 0.0, y0, v0, 0.0, 0.0, 0.0;
  return bc;
}

double qp_objective(const QpProblem& qp, const Eigen::VectorXd& xi) {
  return 0.5 * xi.dot(qp.Q * xi) + qp.q.dot(xi);
}

}  // namespace

TEST_CASE("segment mismatch rejected") {
  const auto basis = make_basis(50);
  CHECK_THROWS_AS(build_qp(make_p(7, 0, 5), cruising_bc(0, 5), PlannerWeights{},
                           basis),
                  std::invalid_argument);
}

TEST_CASE("p enters only q and b") {
  const auto basis = make_basis(100);
  const PlannerWeights w;
  const auto bc = cruising_bc(2.0, 5.0);
  const auto qp1 = build_qp(make_p(4, 1.0, 5.0), bc, w, basis);
  const auto qp2 = build_qp(make_p(4, 3.0, 8.0), bc, w, basis);
  CHECK((qp1.Q - qp2.Q).cwiseAbs().maxCoeff() == 0.0);
  CHECK((qp1.A - qp2.A).cwiseAbs().maxCoeff() == 0.0);
  CHECK((qp1.q - qp2.q).cwiseAbs().maxCoeff() > 0.0);

  SUBCASE("zero tracking weights remove all p dependence") {
    PlannerWeights w0;
    w0.w_lateral = 0.0;
    w0.w_velocity = 0.0;
    const auto qp = build_qp(make_p(4, 3.0, 8.0), bc, w0, basis);
    CHECK(qp.q.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("cost matrix is positive semidefinite") {
  const auto basis = make_basis(100);
  PlannerWeights w;
  w.w_lateral = 0.0;
  w.w_velocity = 0.0;  // smoothness only
  const auto qp = build_qp(make_p(4, 0, 5), cruising_bc(0, 5), w, basis);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(qp.Q);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("stationary set-point gives a straight constant-speed plan") {
  const auto basis = make_basis(100);
  const Planner planner(basis, 4, PlannerWeights{}, TerminalMode::kAccelZero);
  const double y0 = 2.0, v0 = 6.0;
  const auto xi = planner.plan(make_p(4, y0, v0), cruising_bc(y0, v0));
  const auto pos = eval_trajectory(xi, basis, 0);
  const auto vel = eval_trajectory(xi, basis, 1);
  CHECK((pos.y.array() - y0).abs().maxCoeff() <= 1e-6);
  CHECK((vel.x.array() - v0).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("KKT stationarity and feasibility on random instances") {
  const auto basis = make_basis(100);
  const PlannerWeights w;
  const Planner planner(basis, 4, w, TerminalMode::kAccelZero);
  rng::Engine eng(77);
  for (int k = 0; k < 10; ++k) {
    const auto p = make_p(4, eng.uniform(-2, 6), eng.uniform(1, 9));
    const auto bc = cruising_bc(eng.uniform(-1, 5), eng.uniform(2, 8));
    const auto qp = build_qp(p, bc, w, basis);
    const Eigen::VectorXd sol = planner.factor().solve(planner.rhs(p, bc));
    const Eigen::VectorXd xi = sol.head(qp.Q.rows());
    const Eigen::VectorXd nu = sol.tail(qp.A.rows());
    CHECK((qp.Q * xi + qp.q + qp.A.transpose() * nu).cwiseAbs().maxCoeff() <=
          1e-8);
    CHECK((qp.A * xi - qp.b).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("objective is minimal among feasible perturbations") {
  const auto basis = make_basis(100);
  const PlannerWeights w;
  const Planner planner(basis, 4, w, TerminalMode::kAccelZero);
  const auto p = make_p(4, 3.0, 7.0);
  const auto bc = cruising_bc(1.0, 5.0);
  const auto qp = build_qp(p, bc, w, basis);
  const auto xi = planner.plan(p, bc);

  // perturb inside the equality manifold
  Eigen::FullPivLU<Eigen::MatrixXd> lu(qp.A);
  const Eigen::MatrixXd N = lu.kernel();
  rng::Engine eng(78);
  const double f0 = qp_objective(qp, xi);
  const double slack = 1e-9 * std::max(1.0, std::abs(f0));
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd z(N.cols());
    for (int i = 0; i < z.size(); ++i) z(i) = eng.normal();
    Eigen::VectorXd delta = N * z;
    delta *= 1e-3 / delta.norm();
    CHECK(qp_objective(qp, xi + delta) >= f0 - slack);
  }
}

TEST_CASE("identical inputs give identical plans in a batch") {
  const auto basis = make_basis(100);
  const Planner planner(basis, 4, PlannerWeights{}, TerminalMode::kAccelZero);
  const auto bc = cruising_bc(2.0, 5.0);
  const auto batch =
      planner.plan_batch({make_p(4, 3, 7), make_p(4, 3, 7)}, bc);
  CHECK((batch[0] - batch[1]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stronger lateral weight tracks the offset more tightly") {
  const auto basis = make_basis(100);
  const auto bc = cruising_bc(0.0, 5.0);
  const double y_target = 3.0;
  // swept through the regime where smoothness still binds; above wl ~ 1 the
  // degree-10 fit of the tracking law saturates the terminal error
  double prev_err = 1e9;
  for (const double wl : {0.01, 0.1, 1.0}) {
    PlannerWeights w;
    w.w_lateral = wl;
    const Planner planner(basis, 4, w, TerminalMode::kAccelZero);
    const auto xi = planner.plan(make_p(4, y_target, 5.0), bc);
    const auto pos = eval_trajectory(xi, basis, 0);
    const double err = std::abs(pos.y(basis.n_steps() - 1) - y_target);
    CHECK(err < prev_err);
    prev_err = err;
  }
}

TEST_CASE("full terminal state honored when provided") {
  const auto basis = make_basis(100);
  BoundaryConditions bc;
  bc.terminal_mode = TerminalMode::kFullPterm;
  bc.b0 << 0, 0, 5, 0, 0, 0;
  BehavioralInput p = make_p(4, 1.0, 5.0);
  p.p_term = Eigen::Vector<double, 6>{40.0, 2.0, 4.0, 0.0, 0.0, 0.0};
  const Planner planner(basis, 4, PlannerWeights{}, TerminalMode::kFullPterm);
  const auto xi = planner.plan(p, bc);
  const auto pos = eval_trajectory(xi, basis, 0);
  const auto vel = eval_trajectory(xi, basis, 1);
  const int last = basis.n_steps() - 1;
  CHECK(pos.x(last) == doctest::Approx(40.0).epsilon(1e-8));
  CHECK(pos.y(last) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(vel.x(last) == doctest::Approx(4.0).epsilon(1e-8));

  SUBCASE("missing p_term rejected") {
    CHECK_THROWS_AS(planner.plan(make_p(4, 1.0, 5.0), bc),
                    std::invalid_argument);
  }
}

TEST_SUITE_END();
