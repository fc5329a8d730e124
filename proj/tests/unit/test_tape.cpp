#include <doctest.h>

#include <functional>

#include "densedrive/tape.hpp"
#include "support/fixtures.hpp"

using namespace densedrive;
using ddtest::random_vector;

TEST_SUITE_BEGIN("tape");

namespace {

/// Central-difference gradient of a scalar graph w.r.t. one input leaf.
Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x0, double h = 1e-6) {
  Eigen::VectorXd g(x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    Eigen::VectorXd xp = x0, xm = x0;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

void check_close(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                 double rel = 1e-6) {
  REQUIRE(a.size() == b.size());
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  CHECK((a - b).cwiseAbs().maxCoeff() / scale <= rel);
}

/// Builds a scalar graph over a single input and gradchecks it.
void gradcheck(const std::function<ad::Var(ad::Tape&, ad::Var)>& build,
               const Eigen::VectorXd& x0, double rel = 1e-6) {
  ad::Tape t;
  const ad::Var x = t.input(x0);
  const ad::Var loss = build(t, x);
  t.backward(loss);
  const Eigen::VectorXd analytic = t.grad(x);

  const auto value_at = [&](const Eigen::VectorXd& xv) {
    ad::Tape tt;
    const ad::Var xx = tt.input(xv);
    return tt.scalar(build(tt, xx));
  };
  check_close(analytic, fd_gradient(value_at, x0), rel);
}

}  // namespace

TEST_CASE("every elementwise primitive matches finite differences") {
  const Eigen::VectorXd x0 = random_vector(9, 17, 0.8);
  const Eigen::VectorXd w = random_vector(9, 18);

  gradcheck([&](ad::Tape& t, ad::Var x) {
    return t.dot(t.tanh(x), t.constant(w));
  }, x0);
  gradcheck([&](ad::Tape& t, ad::Var x) {
    return t.dot(t.exp(x), t.constant(w));
  }, x0);
  gradcheck([&](ad::Tape& t, ad::Var x) {
    return t.dot(t.softplus(x), t.constant(w));
  }, x0);
  gradcheck([&](ad::Tape& t, ad::Var x) {
    return t.dot(t.sin(x), t.constant(w));
  }, x0);
  gradcheck([&](ad::Tape& t, ad::Var x) {
    return t.dot(t.cos(x), t.constant(w));
  }, x0);
  gradcheck([&](ad::Tape& t, ad::Var x) {
    return t.sumsq(t.mul(x, t.constant(w)));
  }, x0);
  gradcheck([&](ad::Tape& t, ad::Var x) {
    return t.sum(t.scale(x, -2.5));
  }, x0);
  gradcheck([&](ad::Tape& t, ad::Var x) {
    return t.mean(t.sub(x, t.constant(w)));
  }, x0);
  gradcheck([&](ad::Tape& t, ad::Var x) {
    return t.sumsq(t.add(x, t.constant(w)));
  }, x0);
}

TEST_CASE("clamp subgradient: pass-through inside, zero outside") {
  // components placed firmly away from the clamp kinks
  Eigen::VectorXd x0(4);
  x0 << -2.0, -0.3, 0.4, 3.0;
  gradcheck([&](ad::Tape& t, ad::Var x) {
    return t.sum(t.clamp(x, -1.0, 1.0));
  }, x0);

  ad::Tape t;
  const ad::Var x = t.input(x0);
  const ad::Var loss = t.sum(t.clamp(x, -1.0, 1.0));
  t.backward(loss);
  const Eigen::VectorXd g = t.grad(x);
  CHECK(g(0) == 0.0);
  CHECK(g(1) == 1.0);
  CHECK(g(2) == 1.0);
  CHECK(g(3) == 0.0);

  SUBCASE("boundary counts as inside") {
    ad::Tape t2;
    Eigen::VectorXd xb(2);
    xb << -1.0, 1.0;
    const ad::Var v = t2.input(xb);
    const ad::Var l = t2.sum(t2.clamp(v, -1.0, 1.0));
    t2.backward(l);
    CHECK(t2.grad(v)(0) == 1.0);
    CHECK(t2.grad(v)(1) == 1.0);
  }
}

TEST_CASE("atan2 and hypot gradients") {
  const Eigen::VectorXd y0 = random_vector(7, 21, 1.5);
  const Eigen::VectorXd x0 = random_vector(7, 22, 1.5).array() + 2.0;
  const Eigen::VectorXd w = random_vector(7, 23);

  // d/dy and d/dx through atan2
  {
    ad::Tape t;
    const ad::Var y = t.input(y0);
    const ad::Var x = t.input(x0);
    const ad::Var loss = t.dot(t.atan2(y, x), t.constant(w));
    t.backward(loss);
    const auto fy = [&](const Eigen::VectorXd& yv) {
      ad::Tape tt;
      return tt.scalar(
          tt.dot(tt.atan2(tt.input(yv), tt.constant(x0)), tt.constant(w)));
    };
    const auto fx = [&](const Eigen::VectorXd& xv) {
      ad::Tape tt;
      return tt.scalar(
          tt.dot(tt.atan2(tt.constant(y0), tt.input(xv)), tt.constant(w)));
    };
    check_close(t.grad(y), fd_gradient(fy, y0));
    check_close(t.grad(x), fd_gradient(fx, x0));
  }
  {
    ad::Tape t;
    const ad::Var x = t.input(x0);
    const ad::Var loss = t.dot(t.hypot(x, t.constant(y0)), t.constant(w));
    t.backward(loss);
    const auto f = [&](const Eigen::VectorXd& xv) {
      ad::Tape tt;
      return tt.scalar(
          tt.dot(tt.hypot(tt.input(xv), tt.constant(y0)), tt.constant(w)));
    };
    check_close(t.grad(x), fd_gradient(f, x0));
  }

  SUBCASE("origin maps to zero gradient and zero value") {
    ad::Tape t;
    const ad::Var z = t.input(Eigen::VectorXd::Zero(2));
    const ad::Var a = t.atan2(z, z);
    const ad::Var h = t.hypot(z, z);
    CHECK(t.value(a).cwiseAbs().maxCoeff() == 0.0);
    const ad::Var loss = t.add(t.sum(a), t.sum(h));
    t.backward(loss);
    CHECK(t.grad(z).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("matvec, solve and dense layers") {
  const Eigen::MatrixXd M = [&] {
    rng::Engine eng(31);
    Eigen::MatrixXd m(6, 9);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 9; ++j) m(i, j) = eng.normal();
    return m;
  }();
  const Eigen::VectorXd x0 = random_vector(9, 32);
  gradcheck([&](ad::Tape& t, ad::Var x) {
    return t.sumsq(t.matvec(&M, x));
  }, x0);
  const Eigen::VectorXd y0 = random_vector(6, 33);
  gradcheck([&](ad::Tape& t, ad::Var y) {
    return t.sumsq(t.matvec_t(&M, y));
  }, y0);

  SUBCASE("solve adjoint via the symmetric factor") {
    const Eigen::MatrixXd F = M;
    const Eigen::MatrixXd A = random_vector(9, 34).transpose();
    const auto factor = qp::prefactor_kkt(F, A, 0.7);
    const Eigen::VectorXd rhs0 = random_vector(10, 35);
    gradcheck([&](ad::Tape& t, ad::Var rhs) {
      return t.sumsq(t.solve(&factor, rhs));
    }, rhs0, 1e-5);
  }

  SUBCASE("dense layer gradients for weights, bias and input") {
    const int rows = 4, cols = 5;
    const Eigen::VectorXd w0 = random_vector(rows * cols, 36);
    const Eigen::VectorXd b0 = random_vector(rows, 37);
    const Eigen::VectorXd in0 = random_vector(cols, 38);

    ad::Tape t;
    const ad::Var w = t.input(w0);
    const ad::Var b = t.input(b0);
    const ad::Var in = t.input(in0);
    const ad::Var loss = t.sumsq(t.tanh(t.dense(w, b, in, rows, cols)));
    t.backward(loss);

    const auto value = [&](const Eigen::VectorXd& wv, const Eigen::VectorXd& bv,
                           const Eigen::VectorXd& iv) {
      ad::Tape tt;
      return tt.scalar(tt.sumsq(tt.tanh(
          tt.dense(tt.input(wv), tt.input(bv), tt.input(iv), rows, cols))));
    };
    check_close(t.grad(w), fd_gradient([&](const Eigen::VectorXd& v) {
      return value(v, b0, in0);
    }, w0));
    check_close(t.grad(b), fd_gradient([&](const Eigen::VectorXd& v) {
      return value(w0, v, in0);
    }, b0));
    check_close(t.grad(in), fd_gradient([&](const Eigen::VectorXd& v) {
      return value(w0, b0, v);
    }, in0));
  }
}

TEST_CASE("shape ops route gradients") {
  const Eigen::VectorXd x0 = random_vector(10, 41);
  gradcheck([&](ad::Tape& t, ad::Var x) {
    const ad::Var a = t.slice(x, 0, 4);
    const ad::Var b = t.slice(x, 4, 6);
    return t.add(t.sumsq(a), t.sum(t.concat({b, a})));
  }, x0);

  SUBCASE("maxcoef routes to the first maximal entry") {
    ad::Tape t;
    Eigen::VectorXd v(4);
    v << 1.0, 3.0, 3.0, 2.0;
    const ad::Var x = t.input(v);
    const ad::Var mx = t.maxcoef(x);
    CHECK(t.scalar(mx) == 3.0);
    t.backward(mx);
    const Eigen::VectorXd g = t.grad(x);
    CHECK(g(1) == 1.0);
    CHECK(g(2) == 0.0);
  }
}

TEST_CASE("gradients accumulate additively on reused nodes") {
  const Eigen::VectorXd x0 = random_vector(5, 51);
  gradcheck([&](ad::Tape& t, ad::Var x) {
    const ad::Var y = t.tanh(x);
    return t.add(t.sumsq(y), t.sum(t.mul(y, y)));
  }, x0);
}

TEST_CASE("value queries and reset") {
  ad::Tape t;
  const ad::Var x = t.input(random_vector(3, 61));
  CHECK(t.size(x) == 3);
  CHECK(t.num_nodes() == 1);
  t.reset();
  CHECK(t.num_nodes() == 0);
}

TEST_SUITE_END();
