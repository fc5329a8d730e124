#pragma once

#include <Eigen/Dense>
#include <vector>

#include "densedrive/qpcore.hpp"

namespace densedrive::ad {

/// Handle to a node on a Tape.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

/// Minimal reverse-mode engine over vector values.
///
/// Nodes are appended in topological order; backward() walks them once in
/// reverse and accumulates adjoints additively. Matrix and factor payloads
/// are held by pointer and must outlive the tape.
///
/// Nonsmooth conventions: clamp passes gradient 1 on the closed interval and
/// 0 outside; atan2 and hypot return zero gradient at the origin.
class Tape {
 public:
  Tape() = default;

  // -- leaves ---------------------------------------------------------------
  Var input(Eigen::VectorXd v);     // differentiable leaf
  Var constant(Eigen::VectorXd v);  // gradient sink

  // -- linear algebra -------------------------------------------------------
  Var matvec(const Eigen::MatrixXd* M, Var x);    // M x
  Var matvec_t(const Eigen::MatrixXd* M, Var x);  // M^T x
  /// Solve with a prefactored symmetric KKT system.
  Var solve(const qp::KktFactor* factor, Var rhs);
  /// y = reshape(w, rows x cols) * x + b with differentiable w (row-major), b.
  Var dense(Var w_flat, Var b, Var x, int rows, int cols);

  // -- elementwise ----------------------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var tanh(Var a);
  Var exp(Var a);
  Var softplus(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var clamp(Var a, double lo, double hi);
  Var atan2(Var y, Var x);
  Var hypot(Var x, Var y);
  /// cos/sin of atan2(v, u) computed as u/r, v/r (zero at the origin); the
  /// trig-free forms keep unrolled optimizer graphs off libm.
  Var polar_cos(Var u, Var v);
  Var polar_sin(Var u, Var v);

  // -- shape ----------------------------------------------------------------
  Var slice(Var x, int offset, int len);
  Var concat(const std::vector<Var>& parts);

  // -- reductions (length-1 results) ----------------------------------------
  Var sum(Var x);
  Var mean(Var x);
  Var sumsq(Var x);
  Var dot(Var a, Var b);
  Var maxcoef(Var x);  // ties broken towards the lowest index

  // -- access ---------------------------------------------------------------
  const Eigen::VectorXd& value(Var v) const;
  double scalar(Var v) const;
  int size(Var v) const { return static_cast<int>(value(v).size()); }
  std::size_t num_nodes() const { return nodes_.size(); }

  /// Reverse pass seeded with d(seed)/d(seed) = 1. seed must be length 1.
  void backward(Var seed);
  /// Adjoint of a node after backward(); zeros if the node was not reached.
  Eigen::VectorXd grad(Var v) const;

  /// Drops all nodes, keeping allocated capacity.
  void reset();

 private:
  enum class Op {
    kInput, kConstant, kMatvec, kMatvecT, kSolve, kDense,
    kAdd, kSub, kMul, kScale, kTanh, kExp, kSoftplus, kSin, kCos,
    kClamp, kAtan2, kHypot, kPolarCos, kPolarSin, kSlice, kConcat,
    kSum, kMean, kSumsq, kDot, kMax,
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;   // input node indices
    Eigen::VectorXd value;
    const Eigen::MatrixXd* M = nullptr;
    const qp::KktFactor* factor = nullptr;
    double s0 = 0.0, s1 = 0.0;    // scale factor / clamp bounds / slice info
    int i0 = 0, i1 = 0;           // slice offset+len, dense rows+cols, argmax
    int concat_begin = -1, concat_count = 0;
  };

  Var push(Node n);
  const Eigen::VectorXd& val(int i) const { return nodes_[i].value; }
  Eigen::VectorXd& adj(int i);

  std::vector<Node> nodes_;
  std::vector<int> concat_children_;
  std::vector<Eigen::VectorXd> adjoints_;
};

}  // namespace densedrive::ad
