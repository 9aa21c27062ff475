#include "shrinkcl/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

namespace shrinkcl {

namespace {

using int128 = __int128;

// Contingency table with marginals over compacted label ids
// (first-appearance order; label values themselves are irrelevant).
struct Contingency {
  std::vector<std::vector<std::int64_t>> counts;
  std::vector<std::int64_t> row_marginal;
  std::vector<std::int64_t> col_marginal;
  std::int64_t n = 0;
};

std::vector<std::size_t> compact(const std::vector<Index>& labels) {
  std::map<Index, std::size_t> ids;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = ids.emplace(labels[i], ids.size());
    out[i] = it->second;
  }
  return out;
}

Contingency contingency(const std::vector<Index>& a, const std::vector<Index>& b,
                        const char* what) {
  ensure(!a.empty(), std::string(what) + ": empty labelings");
  ensure(a.size() == b.size(),
         std::string(what) + ": labelings differ in length (" +
             std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  const auto ca = compact(a);
  const auto cb = compact(b);
  std::size_t ra = 0, rb = 0;
  for (std::size_t v : ca) ra = std::max(ra, v + 1);
  for (std::size_t v : cb) rb = std::max(rb, v + 1);
  Contingency t;
  t.counts.assign(ra, std::vector<std::int64_t>(rb, 0));
  t.row_marginal.assign(ra, 0);
  t.col_marginal.assign(rb, 0);
  t.n = static_cast<std::int64_t>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    t.counts[ca[i]][cb[i]] += 1;
    t.row_marginal[ca[i]] += 1;
    t.col_marginal[cb[i]] += 1;
  }
  return t;
}

std::int64_t comb2(std::int64_t n) { return n * (n - 1) / 2; }

}  // namespace

double ari(const std::vector<Index>& a, const std::vector<Index>& b) {
  const Contingency t = contingency(a, b, "ari");
  std::int64_t sum_ij = 0, sum_a = 0, sum_b = 0;
  for (const auto& row : t.counts) {
    for (std::int64_t c : row) sum_ij += comb2(c);
  }
  for (std::int64_t c : t.row_marginal) sum_a += comb2(c);
  for (std::int64_t c : t.col_marginal) sum_b += comb2(c);
  const std::int64_t pairs = comb2(t.n);

  const int128 num = 2 * (static_cast<int128>(pairs) * sum_ij -
                          static_cast<int128>(sum_a) * sum_b);
  const int128 den = static_cast<int128>(pairs) * (sum_a + sum_b) -
                     2 * static_cast<int128>(sum_a) * sum_b;
  if (den == 0) {
    // Both partitions are trivial (all singletons or one block) and
    // therefore identical.
    return 1.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

double nmi(const std::vector<Index>& a, const std::vector<Index>& b, NmiNorm norm) {
  const Contingency t = contingency(a, b, "nmi");
  const double n = static_cast<double>(t.n);
  double mi = 0.0;
  for (std::size_t i = 0; i < t.counts.size(); ++i) {
    for (std::size_t j = 0; j < t.counts[i].size(); ++j) {
      const std::int64_t c = t.counts[i][j];
      if (c == 0) continue;
      const double joint = static_cast<double>(c) / n;
      mi += joint * std::log(n * static_cast<double>(c) /
                             (static_cast<double>(t.row_marginal[i]) *
                              static_cast<double>(t.col_marginal[j])));
    }
  }
  if (mi < 0.0) mi = 0.0;  // exact-zero MI can round below zero
  auto entropy = [n](const std::vector<std::int64_t>& marginal) {
    double h = 0.0;
    for (std::int64_t c : marginal) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
    return h;
  };
  const double ha = entropy(t.row_marginal);
  const double hb = entropy(t.col_marginal);
  if (ha == 0.0 && hb == 0.0) return 1.0;  // both single-cluster; identical partitions
  const double denom = norm == NmiNorm::Arithmetic ? 0.5 * (ha + hb) : std::sqrt(ha * hb);
  // One single-cluster side zeroes the geometric denominator while the
  // arithmetic one stays positive; either way MI is 0 and so is the score.
  if (denom == 0.0) return 0.0;
  return mi / denom;
}

CosineGap cosine_gap(const Eigen::Ref<const Matrix>& za,
                     const Eigen::Ref<const Matrix>& zb) {
  ensure(za.rows() == zb.rows() && za.cols() == zb.cols(),
         "cosine_gap: views must have identical shape");
  const Index n = za.rows();
  ensure(n >= 2, "cosine_gap: need at least two samples to form negatives");

  auto normalized = [](const Eigen::Ref<const Matrix>& m) {
    Matrix out(m.rows(), m.cols());
    for (Index i = 0; i < m.rows(); ++i) {
      const double nm = m.row(i).norm();
      ensure(nm > 0.0, "cosine_gap: zero-norm row " + std::to_string(i));
      out.row(i) = m.row(i) / nm;
    }
    return out;
  };
  const Matrix na = normalized(za);
  const Matrix nb = normalized(zb);
  const Matrix sab = na * nb.transpose();
  const Matrix saa = na * na.transpose();
  const Matrix sbb = nb * nb.transpose();

  const double pos_sum = sab.trace();
  const double neg_sum = (sab.sum() - sab.trace()) +
                         0.5 * (saa.sum() - saa.trace()) +
                         0.5 * (sbb.sum() - sbb.trace());
  const double nd = static_cast<double>(n);
  const double neg_count = nd * (nd - 1.0) * 2.0;  // cross pairs + both within-view halves

  CosineGap g;
  g.mean_pos = pos_sum / nd;
  g.mean_neg = neg_sum / neg_count;
  g.gap = g.mean_pos - g.mean_neg;
  return g;
}

}  // namespace shrinkcl
