#include "shrinkcl/tape.hpp"

#include <cmath>
#include <utility>

namespace shrinkcl::ad {

namespace {

void check_same_tape(const Var& a, const Var& b, const char* op) {
  ensure(a.valid() && b.valid() && a.tape() == b.tape(),
         std::string(op) + ": operands recorded on different tapes");
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  ensure(a.rows() == b.rows() && a.cols() == b.cols(),
         std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
             std::to_string(b.cols()) + ")");
}

}  // namespace

const Matrix& Var::value() const {
  ensure(tape_ != nullptr, "Var: unbound variable");
  return tape_->value_of(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  ensure(v.rows() == 1 && v.cols() == 1, "Var::scalar: node is not 1x1");
  return v(0, 0);
}

Var Tape::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::scalar_constant(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::make_node(Matrix value, std::vector<std::size_t> parents, BackwardFn backward) {
  bool needs = false;
  for (std::size_t p : parents) {
    ensure(p < nodes_.size(), "make_node: parent not recorded on this tape");
    needs = needs || nodes_[p].needs_grad;
  }
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::size_t Tape::checked_id(const Var& v) const {
  ensure(v.tape() == this && v.id() < nodes_.size(),
         "Tape: variable not recorded on this tape");
  return v.id();
}

void Tape::backward(const Var& output) {
  std::size_t out = checked_id(output);
  const Matrix& v = nodes_[out].value;
  ensure(v.rows() == 1 && v.cols() == 1, "Tape::backward: output must be 1x1");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  nodes_[out].grad = Matrix::Ones(1, 1);
  for (std::size_t i = out + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, i);
  }
}

Matrix Tape::grad(const Var& v) const {
  std::size_t id = checked_id(v);
  const Node& n = nodes_[id];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

// ---- primitives ---------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  check_same_tape(a, b, "matmul");
  ensure(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tape& t = *a.tape();
  Matrix v = a.value() * b.value();
  std::size_t pa = a.id(), pb = b.id();
  return t.make_node(std::move(v), {pa, pb}, [pa, pb](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    t.accumulate(pa, g * t.value_of(pb).transpose());
    t.accumulate(pb, t.value_of(pa).transpose() * g);
  });
}

Var transpose(const Var& a) {
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  return t.make_node(a.value().transpose(), {pa}, [pa](Tape& t, std::size_t self) {
    t.accumulate(pa, t.grad_of(self).transpose());
  });
}

Var add(const Var& a, const Var& b) {
  check_same_tape(a, b, "add");
  check_same_shape(a, b, "add");
  Tape& t = *a.tape();
  std::size_t pa = a.id(), pb = b.id();
  return t.make_node(a.value() + b.value(), {pa, pb}, [pa, pb](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    t.accumulate(pa, g);
    t.accumulate(pb, g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_tape(a, b, "sub");
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  std::size_t pa = a.id(), pb = b.id();
  return t.make_node(a.value() - b.value(), {pa, pb}, [pa, pb](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    t.accumulate(pa, g);
    t.accumulate(pb, (-g).eval());
  });
}

Var scale(const Var& a, double c) {
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  return t.make_node(c * a.value(), {pa}, [pa, c](Tape& t, std::size_t self) {
    t.accumulate(pa, (c * t.grad_of(self)).eval());
  });
}

Var hadamard(const Var& a, const Var& b) {
  check_same_tape(a, b, "hadamard");
  check_same_shape(a, b, "hadamard");
  Tape& t = *a.tape();
  std::size_t pa = a.id(), pb = b.id();
  return t.make_node(a.value().cwiseProduct(b.value()), {pa, pb},
                     [pa, pb](Tape& t, std::size_t self) {
                       const Matrix& g = t.grad_of(self);
                       t.accumulate(pa, g.cwiseProduct(t.value_of(pb)));
                       t.accumulate(pb, g.cwiseProduct(t.value_of(pa)));
                     });
}

Var cdiv(const Var& a, const Var& b) {
  check_same_tape(a, b, "cdiv");
  check_same_shape(a, b, "cdiv");
  Tape& t = *a.tape();
  std::size_t pa = a.id(), pb = b.id();
  return t.make_node(a.value().cwiseQuotient(b.value()), {pa, pb},
                     [pa, pb](Tape& t, std::size_t self) {
                       const Matrix& g = t.grad_of(self);
                       const Matrix& bv = t.value_of(pb);
                       const Matrix& out = t.value_of(self);
                       t.accumulate(pa, g.cwiseQuotient(bv));
                       t.accumulate(pb, (-g.array() * out.array() / bv.array()).matrix());
                     });
}

Var add_row_broadcast(const Var& a, const Var& row) {
  check_same_tape(a, row, "add_row_broadcast");
  ensure(row.rows() == 1 && row.cols() == a.cols(),
         "add_row_broadcast: row must be 1x" + std::to_string(a.cols()));
  Tape& t = *a.tape();
  std::size_t pa = a.id(), pr = row.id();
  Matrix v = a.value();
  v.rowwise() += RowVector(row.value().row(0));
  return t.make_node(std::move(v), {pa, pr}, [pa, pr](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    t.accumulate(pa, g);
    t.accumulate(pr, g.colwise().sum());
  });
}

Var relu(const Var& a) {
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  return t.make_node(a.value().cwiseMax(0.0), {pa}, [pa](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& av = t.value_of(pa);
    t.accumulate(pa, ((av.array() > 0.0).cast<double>() * g.array()).matrix());
  });
}

Var exp(const Var& a) {
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  return t.make_node(a.value().array().exp().matrix(), {pa},
                     [pa](Tape& t, std::size_t self) {
                       t.accumulate(pa, t.grad_of(self).cwiseProduct(t.value_of(self)));
                     });
}

Var log(const Var& a) {
  ensure((a.value().array() > 0.0).all(), "log: nonpositive entry");
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  return t.make_node(a.value().array().log().matrix(), {pa},
                     [pa](Tape& t, std::size_t self) {
                       t.accumulate(pa, t.grad_of(self).cwiseQuotient(t.value_of(pa)));
                     });
}

Var row_softmax(const Var& a) {
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  return t.make_node(shrinkcl::row_softmax(a.value()), {pa},
                     [pa](Tape& t, std::size_t self) {
                       const Matrix& g = t.grad_of(self);
                       const Matrix& y = t.value_of(self);
                       Matrix da(y.rows(), y.cols());
                       for (Index i = 0; i < y.rows(); ++i) {
                         double dot = g.row(i).dot(y.row(i));
                         da.row(i) = y.row(i).array() * (g.row(i).array() - dot);
                       }
                       t.accumulate(pa, da);
                     });
}

Var row_l2_normalize(const Var& a) {
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  const Matrix& av = a.value();
  Vector norms(av.rows());
  Matrix v(av.rows(), av.cols());
  for (Index i = 0; i < av.rows(); ++i) {
    double n = av.row(i).norm();
    ensure(n > 0.0, "row_l2_normalize: zero-norm row " + std::to_string(i));
    norms(i) = n;
    v.row(i) = av.row(i) / n;
  }
  return t.make_node(std::move(v), {pa},
                     [pa, norms](Tape& t, std::size_t self) {
                       const Matrix& g = t.grad_of(self);
                       const Matrix& y = t.value_of(self);
                       Matrix da(y.rows(), y.cols());
                       for (Index i = 0; i < y.rows(); ++i) {
                         double dot = g.row(i).dot(y.row(i));
                         da.row(i) = (g.row(i) - dot * y.row(i)) / norms(i);
                       }
                       t.accumulate(pa, da);
                     });
}

Var row_sums(const Var& a) {
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  Index m = a.cols();
  return t.make_node(a.value().rowwise().sum(), {pa},
                     [pa, m](Tape& t, std::size_t self) {
                       t.accumulate(pa, t.grad_of(self).replicate(1, m));
                     });
}

Var col_sums(const Var& a) {
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  Index n = a.rows();
  return t.make_node(a.value().colwise().sum(), {pa},
                     [pa, n](Tape& t, std::size_t self) {
                       t.accumulate(pa, t.grad_of(self).replicate(n, 1));
                     });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  Index r = a.rows(), c = a.cols();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return t.make_node(std::move(v), {pa}, [pa, r, c](Tape& t, std::size_t self) {
    double g = t.grad_of(self)(0, 0);
    t.accumulate(pa, Matrix::Constant(r, c, g));
  });
}

Var sumsq(const Var& a) {
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  Matrix v(1, 1);
  v(0, 0) = a.value().squaredNorm();
  return t.make_node(std::move(v), {pa}, [pa](Tape& t, std::size_t self) {
    double g = t.grad_of(self)(0, 0);
    t.accumulate(pa, (2.0 * g * t.value_of(pa)).eval());
  });
}

Var concat_rows(const Var& a, const Var& b) {
  check_same_tape(a, b, "concat_rows");
  ensure(a.cols() == b.cols(), "concat_rows: column counts differ");
  Tape& t = *a.tape();
  std::size_t pa = a.id(), pb = b.id();
  Index ra = a.rows(), rb = b.rows();
  Matrix v(ra + rb, a.cols());
  v.topRows(ra) = a.value();
  v.bottomRows(rb) = b.value();
  return t.make_node(std::move(v), {pa, pb},
                     [pa, pb, ra, rb](Tape& t, std::size_t self) {
                       const Matrix& g = t.grad_of(self);
                       t.accumulate(pa, g.topRows(ra));
                       t.accumulate(pb, g.bottomRows(rb));
                     });
}

Var xlogx(const Var& a, double eps) {
  ensure(eps > 0.0, "xlogx: eps must be positive");
  Tape& t = *a.tape();
  std::size_t pa = a.id();
  const Matrix& av = a.value();
  Matrix v = (av.array() * av.array().max(eps).log()).matrix();
  return t.make_node(std::move(v), {pa}, [pa, eps](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    const auto av = t.value_of(pa).array();
    auto d = av.max(eps).log() + (av >= eps).cast<double>();
    t.accumulate(pa, (g.array() * d).matrix());
  });
}

Var info_nce_rows(const Var& similarities, double tau, bool exclude_self, Index half) {
  ensure(tau > 0.0, "info_nce_rows: tau must be positive");
  const Matrix& s = similarities.value();
  const Index m = s.rows();
  ensure(s.cols() == m, "info_nce_rows: similarity matrix must be square");
  ensure(half >= 1 && m == 2 * half, "info_nce_rows: rows must equal 2*half");

  Vector lse(m);
  double total = 0.0;
  for (Index i = 0; i < m; ++i) {
    double rowmax = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < m; ++j) {
      if (exclude_self && j == i) continue;
      rowmax = std::max(rowmax, s(i, j) / tau);
    }
    double acc = 0.0;
    for (Index j = 0; j < m; ++j) {
      if (exclude_self && j == i) continue;
      acc += std::exp(s(i, j) / tau - rowmax);
    }
    lse(i) = rowmax + std::log(acc);
    const Index pos = (i + half) % m;
    total += lse(i) - s(i, pos) / tau;
  }
  Matrix v(1, 1);
  v(0, 0) = total / static_cast<double>(m);

  Tape& t = *similarities.tape();
  std::size_t ps = similarities.id();
  return t.make_node(std::move(v), {ps},
                     [ps, tau, exclude_self, half, lse](Tape& t, std::size_t self) {
                       double g = t.grad_of(self)(0, 0);
                       const Matrix& s = t.value_of(ps);
                       const Index m = s.rows();
                       const double coef = g / (static_cast<double>(m) * tau);
                       Matrix ds(m, m);
                       for (Index i = 0; i < m; ++i) {
                         for (Index j = 0; j < m; ++j) {
                           ds(i, j) = (exclude_self && j == i)
                                          ? 0.0
                                          : coef * std::exp(s(i, j) / tau - lse(i));
                         }
                         ds(i, (i + half) % m) -= coef;
                       }
                       t.accumulate(ps, ds);
                     });
}

Var marginal_negentropy(const Var& y, double eps) {
  ensure(eps > 0.0, "marginal_negentropy: eps must be positive");
  const Matrix& yv = y.value();
  ensure(yv.rows() >= 1 && yv.cols() >= 1, "marginal_negentropy: empty matrix");
  const double total = yv.sum();
  ensure(total > 0.0, "marginal_negentropy: total mass must be positive");
  RowVector p = yv.colwise().sum() / total;
  double r = 0.0;
  for (Index i = 0; i < p.size(); ++i) r += p(i) * std::log(std::max(p(i), eps));
  Matrix v(1, 1);
  v(0, 0) = r;

  Tape& t = *y.tape();
  std::size_t py = y.id();
  return t.make_node(std::move(v), {py}, [py, eps](Tape& t, std::size_t self) {
    double g = t.grad_of(self)(0, 0);
    const Matrix& yv = t.value_of(py);
    const double total = yv.sum();
    RowVector p = yv.colwise().sum() / total;
    RowVector d(p.size());
    double mean_d = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
      d(i) = std::log(std::max(p(i), eps)) + (p(i) >= eps ? 1.0 : 0.0);
      mean_d += d(i) * p(i);
    }
    Matrix dy = ((d.array() - mean_d) * (g / total)).matrix().replicate(yv.rows(), 1);
    t.accumulate(py, dy);
  });
}

}  // namespace shrinkcl::ad
