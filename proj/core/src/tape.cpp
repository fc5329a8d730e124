#include "densedrive/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace densedrive::ad {

namespace {
void check_same_size(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     const char* what) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string("Tape: size mismatch in ") + what);
}
}  // namespace

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Eigen::VectorXd v) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(v);
  return push(std::move(n));
}

Var Tape::constant(Eigen::VectorXd v) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(v);
  return push(std::move(n));
}

Var Tape::matvec(const Eigen::MatrixXd* M, Var x) {
  if (M->cols() != value(x).size())
    throw std::invalid_argument("Tape: matvec dimension mismatch");
  Node n;
  n.op = Op::kMatvec;
  n.a = x.idx;
  n.M = M;
  n.value = (*M) * val(x.idx);
  return push(std::move(n));
}

Var Tape::matvec_t(const Eigen::MatrixXd* M, Var x) {
  if (M->rows() != value(x).size())
    throw std::invalid_argument("Tape: matvec_t dimension mismatch");
  Node n;
  n.op = Op::kMatvecT;
  n.a = x.idx;
  n.M = M;
  n.value = M->transpose() * val(x.idx);
  return push(std::move(n));
}

Var Tape::solve(const qp::KktFactor* factor, Var rhs) {
  Node n;
  n.op = Op::kSolve;
  n.a = rhs.idx;
  n.factor = factor;
  n.value = factor->solve(val(rhs.idx));
  return push(std::move(n));
}

Var Tape::dense(Var w_flat, Var b, Var x, int rows, int cols) {
  const auto& w = val(w_flat.idx);
  if (w.size() != static_cast<Eigen::Index>(rows) * cols)
    throw std::invalid_argument("Tape: dense weight size mismatch");
  if (val(b.idx).size() != rows || val(x.idx).size() != cols)
    throw std::invalid_argument("Tape: dense bias/input size mismatch");
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> W(w.data(), rows, cols);
  Node n;
  n.op = Op::kDense;
  n.a = w_flat.idx;
  n.b = b.idx;
  n.c = x.idx;
  n.i0 = rows;
  n.i1 = cols;
  n.value = W * val(x.idx) + val(b.idx);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_same_size(val(a.idx), val(b.idx), "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.idx;
  n.b = b.idx;
  n.value = val(a.idx) + val(b.idx);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_size(val(a.idx), val(b.idx), "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.idx;
  n.b = b.idx;
  n.value = val(a.idx) - val(b.idx);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_same_size(val(a.idx), val(b.idx), "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a.idx;
  n.b = b.idx;
  n.value = val(a.idx).cwiseProduct(val(b.idx));
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::kScale;
  n.a = a.idx;
  n.s0 = s;
  n.value = s * val(a.idx);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.idx;
  n.value = val(a.idx).array().tanh();
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  Node n;
  n.op = Op::kExp;
  n.a = a.idx;
  n.value = val(a.idx).array().exp();
  return push(std::move(n));
}

Var Tape::softplus(Var a) {
  Node n;
  n.op = Op::kSoftplus;
  n.a = a.idx;
  // log(1 + e^x), evaluated stably for large |x|
  n.value = val(a.idx).unaryExpr([](double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
  });
  return push(std::move(n));
}

Var Tape::sin(Var a) {
  Node n;
  n.op = Op::kSin;
  n.a = a.idx;
  n.value = val(a.idx).array().sin();
  return push(std::move(n));
}

Var Tape::cos(Var a) {
  Node n;
  n.op = Op::kCos;
  n.a = a.idx;
  n.value = val(a.idx).array().cos();
  return push(std::move(n));
}

Var Tape::clamp(Var a, double lo, double hi) {
  Node n;
  n.op = Op::kClamp;
  n.a = a.idx;
  n.s0 = lo;
  n.s1 = hi;
  n.value = val(a.idx).cwiseMax(lo).cwiseMin(hi);
  return push(std::move(n));
}

Var Tape::atan2(Var y, Var x) {
  check_same_size(val(y.idx), val(x.idx), "atan2");
  Node n;
  n.op = Op::kAtan2;
  n.a = y.idx;
  n.b = x.idx;
  n.value = val(y.idx).binaryExpr(val(x.idx), [](double yy, double xx) {
    return (yy == 0.0 && xx == 0.0) ? 0.0 : std::atan2(yy, xx);
  });
  return push(std::move(n));
}

Var Tape::hypot(Var x, Var y) {
  check_same_size(val(x.idx), val(y.idx), "hypot");
  Node n;
  n.op = Op::kHypot;
  n.a = x.idx;
  n.b = y.idx;
  n.value =
      (val(x.idx).array().square() + val(y.idx).array().square()).sqrt();
  return push(std::move(n));
}

namespace {
inline double safe_div(double num, double r) { return r == 0.0 ? 0.0 : num / r; }
}  // namespace

Var Tape::polar_cos(Var u, Var v) {
  check_same_size(val(u.idx), val(v.idx), "polar_cos");
  Node n;
  n.op = Op::kPolarCos;
  n.a = u.idx;
  n.b = v.idx;
  n.value = val(u.idx).binaryExpr(val(v.idx), [](double uu, double vv) {
    return safe_div(uu, std::sqrt(uu * uu + vv * vv));
  });
  return push(std::move(n));
}

Var Tape::polar_sin(Var u, Var v) {
  check_same_size(val(u.idx), val(v.idx), "polar_sin");
  Node n;
  n.op = Op::kPolarSin;
  n.a = u.idx;
  n.b = v.idx;
  n.value = val(u.idx).binaryExpr(val(v.idx), [](double uu, double vv) {
    return safe_div(vv, std::sqrt(uu * uu + vv * vv));
  });
  return push(std::move(n));
}

Var Tape::slice(Var x, int offset, int len) {
  if (offset < 0 || len < 0 || offset + len > value(x).size())
    throw std::invalid_argument("Tape: slice out of range");
  Node n;
  n.op = Op::kSlice;
  n.a = x.idx;
  n.i0 = offset;
  n.i1 = len;
  n.value = val(x.idx).segment(offset, len);
  return push(std::move(n));
}

Var Tape::concat(const std::vector<Var>& parts) {
  Eigen::Index total = 0;
  for (Var p : parts) total += value(p).size();
  Node n;
  n.op = Op::kConcat;
  n.concat_begin = static_cast<int>(concat_children_.size());
  n.concat_count = static_cast<int>(parts.size());
  n.value.resize(total);
  Eigen::Index off = 0;
  for (Var p : parts) {
    concat_children_.push_back(p.idx);
    n.value.segment(off, val(p.idx).size()) = val(p.idx);
    off += val(p.idx).size();
  }
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  Node n;
  n.op = Op::kSum;
  n.a = x.idx;
  n.value = Eigen::VectorXd::Constant(1, val(x.idx).sum());
  return push(std::move(n));
}

Var Tape::mean(Var x) {
  Node n;
  n.op = Op::kMean;
  n.a = x.idx;
  n.value = Eigen::VectorXd::Constant(1, val(x.idx).mean());
  return push(std::move(n));
}

Var Tape::sumsq(Var x) {
  Node n;
  n.op = Op::kSumsq;
  n.a = x.idx;
  n.value = Eigen::VectorXd::Constant(1, val(x.idx).squaredNorm());
  return push(std::move(n));
}

Var Tape::dot(Var a, Var b) {
  check_same_size(val(a.idx), val(b.idx), "dot");
  Node n;
  n.op = Op::kDot;
  n.a = a.idx;
  n.b = b.idx;
  n.value = Eigen::VectorXd::Constant(1, val(a.idx).dot(val(b.idx)));
  return push(std::move(n));
}

Var Tape::maxcoef(Var x) {
  const auto& v = val(x.idx);
  if (v.size() == 0) throw std::invalid_argument("Tape: maxcoef of empty vector");
  Eigen::Index arg = 0;
  v.maxCoeff(&arg);
  Node n;
  n.op = Op::kMax;
  n.a = x.idx;
  n.i0 = static_cast<int>(arg);
  n.value = Eigen::VectorXd::Constant(1, v(arg));
  return push(std::move(n));
}

const Eigen::VectorXd& Tape::value(Var v) const {
  if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: invalid Var");
  return nodes_[v.idx].value;
}

double Tape::scalar(Var v) const {
  const auto& x = value(v);
  if (x.size() != 1) throw std::invalid_argument("Tape: scalar of non-scalar");
  return x(0);
}

Eigen::VectorXd& Tape::adj(int i) {
  auto& a = adjoints_[i];
  if (a.size() == 0) a = Eigen::VectorXd::Zero(nodes_[i].value.size());
  return a;
}

void Tape::backward(Var seed) {
  if (value(seed).size() != 1)
    throw std::invalid_argument("Tape: backward seed must be scalar");
  adjoints_.assign(nodes_.size(), Eigen::VectorXd());
  adj(seed.idx)(0) = 1.0;

  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  for (int i = seed.idx; i >= 0; --i) {
    if (adjoints_[i].size() == 0) continue;  // node not on a path to the seed
    const Node& n = nodes_[i];
    const Eigen::VectorXd& g = adjoints_[i];
    switch (n.op) {
      case Op::kInput:
      case Op::kConstant:
        break;
      case Op::kMatvec:
        adj(n.a).noalias() += n.M->transpose() * g;
        break;
      case Op::kMatvecT:
        adj(n.a).noalias() += (*n.M) * g;
        break;
      case Op::kSolve:
        // KKT matrix is symmetric, so the adjoint solve reuses the factor.
        adj(n.a) += n.factor->solve(g);
        break;
      case Op::kDense: {
        Eigen::Map<const RowMajor> W(val(n.a).data(), n.i0, n.i1);
        Eigen::Map<RowMajor> Wg(adj(n.a).data(), n.i0, n.i1);
        Wg.noalias() += g * val(n.c).transpose();
        adj(n.b) += g;
        adj(n.c).noalias() += W.transpose() * g;
        break;
      }
      case Op::kAdd:
        adj(n.a) += g;
        adj(n.b) += g;
        break;
      case Op::kSub:
        adj(n.a) += g;
        adj(n.b) -= g;
        break;
      case Op::kMul:
        adj(n.a).array() += g.array() * val(n.b).array();
        adj(n.b).array() += g.array() * val(n.a).array();
        break;
      case Op::kScale:
        adj(n.a) += n.s0 * g;
        break;
      case Op::kTanh:
        adj(n.a).array() += g.array() * (1.0 - n.value.array().square());
        break;
      case Op::kExp:
        adj(n.a).array() += g.array() * n.value.array();
        break;
      case Op::kSoftplus:
        // d/dx log(1+e^x) = sigmoid(x)
        adj(n.a).array() +=
            g.array() * val(n.a).array().unaryExpr([](double x) {
              return x > 0 ? 1.0 / (1.0 + std::exp(-x))
                           : std::exp(x) / (1.0 + std::exp(x));
            });
        break;
      case Op::kSin:
        adj(n.a).array() += g.array() * val(n.a).array().cos();
        break;
      case Op::kCos:
        adj(n.a).array() -= g.array() * val(n.a).array().sin();
        break;
      case Op::kClamp: {
        const auto& x = val(n.a);
        auto& ga = adj(n.a);
        for (Eigen::Index k = 0; k < x.size(); ++k)
          if (x(k) >= n.s0 && x(k) <= n.s1) ga(k) += g(k);
        break;
      }
      case Op::kAtan2: {
        const auto& y = val(n.a);
        const auto& x = val(n.b);
        auto& gy = adj(n.a);
        auto& gx = adj(n.b);
        for (Eigen::Index k = 0; k < y.size(); ++k) {
          const double d = x(k) * x(k) + y(k) * y(k);
          if (d == 0.0) continue;
          gy(k) += g(k) * x(k) / d;
          gx(k) -= g(k) * y(k) / d;
        }
        break;
      }
      case Op::kHypot: {
        const auto& x = val(n.a);
        const auto& y = val(n.b);
        auto& gx = adj(n.a);
        auto& gy = adj(n.b);
        for (Eigen::Index k = 0; k < x.size(); ++k) {
          if (n.value(k) == 0.0) continue;
          gx(k) += g(k) * x(k) / n.value(k);
          gy(k) += g(k) * y(k) / n.value(k);
        }
        break;
      }
      case Op::kPolarCos: {
        // d(u/r)/du = v^2 / r^3, d(u/r)/dv = -u v / r^3
        const auto& u = val(n.a);
        const auto& v = val(n.b);
        auto& gu = adj(n.a);
        auto& gv = adj(n.b);
        for (Eigen::Index k = 0; k < u.size(); ++k) {
          const double r2 = u(k) * u(k) + v(k) * v(k);
          if (r2 == 0.0) continue;
          const double r3 = r2 * std::sqrt(r2);
          gu(k) += g(k) * v(k) * v(k) / r3;
          gv(k) -= g(k) * u(k) * v(k) / r3;
        }
        break;
      }
      case Op::kPolarSin: {
        const auto& u = val(n.a);
        const auto& v = val(n.b);
        auto& gu = adj(n.a);
        auto& gv = adj(n.b);
        for (Eigen::Index k = 0; k < u.size(); ++k) {
          const double r2 = u(k) * u(k) + v(k) * v(k);
          if (r2 == 0.0) continue;
          const double r3 = r2 * std::sqrt(r2);
          gv(k) += g(k) * u(k) * u(k) / r3;
          gu(k) -= g(k) * u(k) * v(k) / r3;
        }
        break;
      }
      case Op::kSlice:
        adj(n.a).segment(n.i0, n.i1) += g;
        break;
      case Op::kConcat: {
        Eigen::Index off = 0;
        for (int k = 0; k < n.concat_count; ++k) {
          const int child = concat_children_[n.concat_begin + k];
          auto& gc = adj(child);
          gc += g.segment(off, gc.size());
          off += gc.size();
        }
        break;
      }
      case Op::kSum:
        adj(n.a).array() += g(0);
        break;
      case Op::kMean:
        adj(n.a).array() += g(0) / static_cast<double>(val(n.a).size());
        break;
      case Op::kSumsq:
        adj(n.a) += 2.0 * g(0) * val(n.a);
        break;
      case Op::kDot:
        adj(n.a) += g(0) * val(n.b);
        adj(n.b) += g(0) * val(n.a);
        break;
      case Op::kMax:
        adj(n.a)(n.i0) += g(0);
        break;
    }
  }
}

Eigen::VectorXd Tape::grad(Var v) const {
  if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: invalid Var");
  if (adjoints_.empty())
    throw std::logic_error("Tape: grad() before backward()");
  if (adjoints_[v.idx].size() == 0)
    return Eigen::VectorXd::Zero(nodes_[v.idx].value.size());
  return adjoints_[v.idx];
}

void Tape::reset() {
  nodes_.clear();
  concat_children_.clear();
  adjoints_.clear();
}

}  // namespace densedrive::ad
