// Independent reference implementations used to cross-check the library.
// Everything here is written the slow, obvious way on purpose: plain loops,
// no Eigen expression tricks, no code shared with the implementations under
// test beyond the Matrix typedef.
#pragma once

#include "shrinkcl/common.hpp"
#include "shrinkcl/rng.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <utility>
#include <vector>

namespace oracle {

using shrinkcl::Index;
using shrinkcl::Matrix;
using shrinkcl::Vector;

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

// Central finite differences of a scalar function of several matrices.
// Step is scaled per entry: h = scale * max(1, |w|).
inline std::vector<Matrix> fd_gradients(
    const std::function<double(const std::vector<Matrix>&)>& f,
    std::vector<Matrix> params, double scale = 1e-5) {
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix g = Matrix::Zero(params[p].rows(), params[p].cols());
    for (Index i = 0; i < g.rows(); ++i) {
      for (Index j = 0; j < g.cols(); ++j) {
        const double w = params[p](i, j);
        const double h = scale * std::max(1.0, std::abs(w));
        params[p](i, j) = w + h;
        const double up = f(params);
        params[p](i, j) = w - h;
        const double down = f(params);
        params[p](i, j) = w;
        g(i, j) = (up - down) / (2.0 * h);
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// Mixed absolute/relative gradient comparison: absolute for tiny gradients,
// relative otherwise. Returns the largest error over all entries.
inline double max_grad_error(const std::vector<Matrix>& got,
                             const std::vector<Matrix>& want) {
  double worst = 0.0;
  for (std::size_t p = 0; p < got.size(); ++p) {
    for (Index i = 0; i < got[p].rows(); ++i)
      for (Index j = 0; j < got[p].cols(); ++j) {
        const double denom = std::max(std::abs(want[p](i, j)), 1e-3);
        worst = std::max(worst, std::abs(got[p](i, j) - want[p](i, j)) / denom);
      }
  }
  return worst;
}

// Adjusted Rand index from pair counts over all C(n,2) pairs, a formulation
// independent of the contingency-table route used by the library.
inline double pair_ari(const std::vector<Index>& a, const std::vector<Index>& b) {
  const std::size_t n = a.size();
  double s11 = 0, s10 = 0, s01 = 0, s00 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same_a = a[i] == a[j];
      const bool same_b = b[i] == b[j];
      if (same_a && same_b) s11 += 1;
      else if (same_a) s10 += 1;
      else if (same_b) s01 += 1;
      else s00 += 1;
    }
  }
  const double num = 2.0 * (s11 * s00 - s10 * s01);
  const double den = (s11 + s10) * (s10 + s00) + (s11 + s01) * (s01 + s00);
  if (den == 0.0) return 1.0;
  return num / den;
}

// NMI straight from the joint table. Counts stay integral until the final
// division so a single-cluster side has exactly zero entropy.
inline double direct_nmi(const std::vector<Index>& a, const std::vector<Index>& b,
                         bool geometric = false) {
  const double n = static_cast<double>(a.size());
  std::map<std::pair<Index, Index>, long> joint;
  std::map<Index, long> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ca[a[i]] += 1;
    cb[b[i]] += 1;
  }
  double mi = 0.0;
  for (const auto& [key, c] : joint) {
    const double p = static_cast<double>(c) / n;
    const double pa = static_cast<double>(ca[key.first]) / n;
    const double pb = static_cast<double>(cb[key.second]) / n;
    mi += p * std::log(p / (pa * pb));
  }
  double ha = 0.0, hb = 0.0;
  for (const auto& [k, c] : ca) ha -= (c / n) * std::log(c / n);
  for (const auto& [k, c] : cb) hb -= (c / n) * std::log(c / n);
  if (ha == 0.0 && hb == 0.0) return 1.0;  // identical trivial partitions
  const double denom = geometric ? std::sqrt(ha * hb) : 0.5 * (ha + hb);
  if (denom == 0.0) return 0.0;  // one trivial side: no information shared
  return std::max(0.0, mi) / denom;
}

inline double cosine(const Vector& u, const Vector& v) {
  double uu = 0, vv = 0, uv = 0;
  for (Index i = 0; i < u.size(); ++i) {
    uu += u(i) * u(i);
    vv += v(i) * v(i);
    uv += u(i) * v(i);
  }
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

// Positive-pair mean minus negative-pair mean over the 2N stacked rows.
inline void brute_cosine_gap(const Matrix& za, const Matrix& zb, double& mean_pos,
                             double& mean_neg) {
  const Index n = za.rows();
  Matrix all(2 * n, za.cols());
  all << za, zb;
  double pos = 0.0;
  for (Index i = 0; i < n; ++i) pos += cosine(za.row(i), zb.row(i));
  mean_pos = pos / static_cast<double>(n);
  double neg = 0.0;
  double count = 0.0;
  for (Index i = 0; i < 2 * n; ++i) {
    for (Index j = i + 1; j < 2 * n; ++j) {
      if (j == i + n) continue;  // positive pair
      neg += cosine(all.row(i), all.row(j));
      count += 1.0;
    }
  }
  mean_neg = neg / count;
}

// Instance-level contrastive loss written as the directly-transcribed double
// loop over 2N anchors.
inline double naive_instance_loss(const Matrix& za, const Matrix& zb, double tau,
                                  bool exclude_self) {
  const Index n = za.rows();
  Matrix all(2 * n, za.cols());
  all << za, zb;
  double total = 0.0;
  for (Index t = 0; t < 2 * n; ++t) {
    const Index pos = (t + n) % (2 * n);
    double den = 0.0;
    for (Index j = 0; j < 2 * n; ++j) {
      if (exclude_self && j == t) continue;
      den += std::exp(cosine(all.row(t), all.row(j)) / tau);
    }
    const double num = std::exp(cosine(all.row(t), all.row(pos)) / tau);
    total += -std::log(num / den);
  }
  return total / static_cast<double>(2 * n);
}

// Cluster-level loss: the same contrastive form over the 2K columns plus the
// signed marginal-entropy regularizer.
inline double naive_cluster_loss(const Matrix& ya, const Matrix& yb, double tau,
                                 bool exclude_self, double eps, bool strict_sign) {
  const Index k = ya.cols();
  Matrix cols(ya.rows(), 2 * k);
  cols << ya, yb;
  double pair = 0.0;
  for (Index t = 0; t < 2 * k; ++t) {
    const Index pos = (t + k) % (2 * k);
    double den = 0.0;
    for (Index j = 0; j < 2 * k; ++j) {
      if (exclude_self && j == t) continue;
      den += std::exp(cosine(cols.col(t), cols.col(j)) / tau);
    }
    const double num = std::exp(cosine(cols.col(t), cols.col(pos)) / tau);
    pair += -std::log(num / den);
  }
  pair /= static_cast<double>(2 * k);

  double reg = 0.0;
  for (const Matrix* y : {&ya, &yb}) {
    const double total = y->sum();
    for (Index c = 0; c < k; ++c) {
      const double p = y->col(c).sum() / total;
      reg += p * std::log(std::max(p, eps));
    }
  }
  return pair + (strict_sign ? -reg : reg);
}

// Per-point shrinkage loss with frozen statistics, as a direct loop.
inline double naive_sure_loss(const Matrix& h, const std::vector<Index>& labels,
                              const Matrix& mu_hat, const Vector& sigma2_k,
                              const std::vector<Index>& n_k) {
  const double p = static_cast<double>(h.cols());
  double total = 0.0;
  for (Index i = 0; i < h.rows(); ++i) {
    const Index k = labels[static_cast<std::size_t>(i)];
    const double s2 = sigma2_k(k);
    const double t2 = s2 / static_cast<double>(n_k[static_cast<std::size_t>(k)]);
    const double shrink = s2 / (t2 + s2);
    double dist = 0.0;
    for (Index j = 0; j < h.cols(); ++j) {
      const double d = mu_hat(k, j) - h(i, j);
      dist += d * d;
    }
    total += shrink * (dist + p * (t2 - s2));
  }
  return total;
}

inline Matrix random_matrix(shrinkcl::Pcg32& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline std::vector<Index> random_labels(shrinkcl::Pcg32& rng, Index n, Index k) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(k)));
  return v;
}

}  // namespace oracle
