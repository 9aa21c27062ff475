#pragma once

#include "shrinkcl/common.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace shrinkcl::ad {

class Tape;

/// Handle to a matrix value recorded on a Tape. Cheap to copy; valid for
/// the lifetime of the owning tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = static_cast<std::size_t>(-1);
};

/// Reverse-mode tape over dense double matrices. Operations append nodes
/// in evaluation order; backward() replays them in reverse, so the sweep
/// is a fixed-order Wengert list and gradients are bit-reproducible for a
/// given recording. One tape is used from one thread at a time.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf.
  Var input(Matrix value);
  /// Non-differentiable leaf.
  Var constant(Matrix value);
  Var scalar_constant(double v);

  /// Reverse sweep seeded with d(output)/d(output) = 1; `output` must be
  /// 1x1 and recorded on this tape.
  void backward(const Var& output);

  /// Gradient of the last backward() target with respect to `v`; a zero
  /// matrix when `v` did not influence it. Errors if `v` belongs to a
  /// different tape (or none).
  Matrix grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

  // ---- plumbing for operation implementations -----------------------

  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  /// Appends a node; `backward` reads grad_of(self) and accumulates into
  /// the parents. Parents must already be recorded on this tape.
  Var make_node(Matrix value, std::vector<std::size_t> parents, BackwardFn backward);

  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad_of(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Validates that `v` is recorded here and returns its id.
  std::size_t checked_id(const Var& v) const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---- primitive operations ---------------------------------------------
// Each op validates shapes and tape affinity, computes the forward value
// eagerly, and registers the exact reverse rule.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var hadamard(const Var& a, const Var& b);
Var cdiv(const Var& a, const Var& b);
/// a (n x m) plus a broadcast 1 x m row.
Var add_row_broadcast(const Var& a, const Var& row);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var row_softmax(const Var& a);
/// Divides each row by its Euclidean norm; errors on an exactly zero row.
Var row_l2_normalize(const Var& a);
Var row_sums(const Var& a);   // n x 1
Var col_sums(const Var& a);   // 1 x m
Var sum(const Var& a);        // 1 x 1
Var sumsq(const Var& a);      // 1 x 1, sum of squared entries
Var concat_rows(const Var& a, const Var& b);
/// Elementwise x * log(max(x, eps)); the clamp only affects the log argument.
Var xlogx(const Var& a, double eps);

/// Mean over the M rows of a square similarity matrix (M = 2*half) of
///   logsumexp_j S(i, j)/tau  -  S(i, (i+half) % M)/tau,
/// the temperature-scaled softmax cross-entropy whose positive sits half
/// a block away. With exclude_self the j == i term is dropped from the
/// denominator sum (the positive column is always kept).
Var info_nce_rows(const Var& similarities, double tau, bool exclude_self, Index half);

/// sum_i P_i log(max(P_i, eps)) with P = column sums of y / total sum of y.
/// For row-stochastic y this is the negative entropy of the cluster-size
/// marginal; it is minimal (-log K) at uniform marginals.
Var marginal_negentropy(const Var& y, double eps);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }

}  // namespace shrinkcl::ad
