#pragma once

#include "shrinkcl/common.hpp"
#include "shrinkcl/tape.hpp"

namespace shrinkcl {

struct ContrastConfig {
  double tau_instance = 0.5;
  double tau_cluster = 1.0;
  /// Drop the anchor's own same-view similarity from the denominator
  /// (the positive is always kept). Off reproduces the literal formula
  /// whose denominator includes exp(1/tau) per anchor.
  bool exclude_self = true;
  /// Flip the uniformity regularizer to the literal written sign, which
  /// rewards one-hot marginals instead of penalizing them. Ablation only.
  bool strict_entropy_sign = false;
  /// Floor inside log for the marginal terms.
  double entropy_eps = 1e-12;

  void validate() const;
};

/// Cosine similarity; errors on a zero-norm operand.
double cos_sim(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v);

/// | cos(u, v) - (|u|^2 + |v|^2 - |u - v|^2) / (2 |u| |v|) |, the residual
/// of the law-of-cosines identity tying cosine to Euclidean distance.
double cosine_euclid_identity_residual(const Eigen::Ref<const Vector>& u,
                                       const Eigen::Ref<const Vector>& v);

/// Temperature-scaled contrastive loss over N augmentation pairs: both
/// views of each sample serve as anchors (2N terms), the positive is the
/// sample's other view, and the denominator runs over both views' rows.
/// Invariant to any positive rescaling of all embeddings.
double instance_loss(const Eigen::Ref<const Matrix>& za,
                     const Eigen::Ref<const Matrix>& zb, const ContrastConfig& cfg);
ad::Var instance_loss(ad::Tape& tape, const ad::Var& za, const ad::Var& zb,
                      const ContrastConfig& cfg);

/// Contrastive loss over the 2K cluster-probability columns (each view's
/// column k is the anchor, the other view's column k the positive) plus
/// the marginal uniformity regularizer sum_i P_i log P_i per view, added
/// so that minimizing drives cluster marginals toward uniform. Rows of
/// ya/yb must be probability vectors.
double cluster_loss(const Eigen::Ref<const Matrix>& ya,
                    const Eigen::Ref<const Matrix>& yb, const ContrastConfig& cfg);
ad::Var cluster_loss(ad::Tape& tape, const ad::Var& ya, const ad::Var& yb,
                     const ContrastConfig& cfg);

/// l_sure + alpha * l_ins + beta * l_clu.
double total_loss(double l_sure, double l_ins, double l_clu, double alpha, double beta);

}  // namespace shrinkcl
