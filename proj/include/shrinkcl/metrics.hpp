#pragma once

#include "shrinkcl/common.hpp"

#include <vector>

namespace shrinkcl {

/// Adjusted Rand index between two labelings of the same points, computed
/// from the contingency table with 128-bit integer pair counts so the
/// expected-index correction stays exact at large N. Identical trivial
/// partitions (both denominator-degenerate) score 1.
double ari(const std::vector<Index>& a, const std::vector<Index>& b);

enum class NmiNorm { Arithmetic, Geometric };

/// Mutual information normalized by the mean (arithmetic by default,
/// geometric on request) of the two label entropies. Two single-cluster
/// partitions score 1; a single-cluster labeling against a multi-cluster
/// one scores 0 under either normalization.
double nmi(const std::vector<Index>& a, const std::vector<Index>& b,
           NmiNorm norm = NmiNorm::Arithmetic);

struct CosineGap {
  double mean_pos = 0.0;
  double mean_neg = 0.0;
  double gap = 0.0;
};

/// Mean cosine over the N positive pairs (row i of za with row i of zb)
/// minus the mean over every other distinct pair among the 2N rows:
/// cross-view (i != j) plus the within-view unordered pairs of each view.
CosineGap cosine_gap(const Eigen::Ref<const Matrix>& za,
                     const Eigen::Ref<const Matrix>& zb);

}  // namespace shrinkcl
