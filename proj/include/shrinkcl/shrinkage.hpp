#pragma once

#include "shrinkcl/common.hpp"
#include "shrinkcl/tape.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace shrinkcl {

/// Two-level Gaussian model: theta ~ Normal(mu, tau2 I), x | theta ~
/// Normal(theta, sigma2 I).
struct GaussianHierarchy {
  Vector mu;
  double tau2 = 0.0;
  double sigma2 = 1.0;

  void validate() const;
};

/// Shrink-toward-origin estimator (1 - (P-2) sigma2 / |x|^2) x. Requires
/// P >= 3 and a nonzero observation; positive_part clamps the factor at 0.
Vector js_estimate(const Eigen::Ref<const Vector>& x, double sigma2,
                   bool positive_part = false);

/// Posterior mean under the hierarchy: a convex combination of the
/// observation and the prior mean with weight tau2 / (tau2 + sigma2).
Vector map_estimate(const Eigen::Ref<const Vector>& x, const GaussianHierarchy& h);

/// Unbiased risk estimate for map_estimate via Stein's identity:
///   -P sigma2 + |theta_hat(x) - x|^2 + 2 sigma2 P tau2 / (tau2 + sigma2).
/// Its expectation over x drawn from the hierarchy equals
/// E |theta_hat(x) - theta|^2. Translation of x and mu together leaves it
/// unchanged.
double sure(const Eigen::Ref<const Vector>& x, const GaussianHierarchy& h);

/// Per-cluster plug-in statistics over embedding rows.
///   mu_hat(k, .)    cluster mean
///   sigma2_pk(k, p) Bessel-corrected per-component variance over members
///   sigma2_k(k)     component average of sigma2_pk
///   tau2_k(k)       sigma2_k / n_k (mean's sampling variance)
/// Clusters with n_k <= 1 or sigma2_k == 0 are flagged unusable.
struct ClusterStats {
  Index k = 0;
  Index p = 0;
  Matrix mu_hat;
  Matrix sigma2_pk;
  Vector sigma2_k;
  Vector tau2_k;
  std::vector<Index> n_k;
  std::vector<bool> usable;

  /// sigma2_k / (tau2_k + sigma2_k) = n_k / (n_k + 1).
  double shrink_factor(Index cluster) const;
  void validate() const;
};

ClusterStats cluster_stats(const Eigen::Ref<const Matrix>& h,
                           const std::vector<Index>& labels, Index k);

enum class DegeneratePolicy { Error, Skip };

/// Sum over rows of shrink_k (|mu_hat_k - h_i|^2 + P (tau2_k - sigma2_k))
/// with k the row's label and all statistics held constant. Evaluated on
/// the same rows and labels the statistics came from, the sum telescopes
/// to zero. Rows labeled with an unusable cluster either raise an error
/// or are skipped, per `policy`.
double sure_loss(const Eigen::Ref<const Matrix>& h, const std::vector<Index>& labels,
                 const ClusterStats& stats,
                 DegeneratePolicy policy = DegeneratePolicy::Error);

/// Tape form; the statistics are constants, so the gradient with respect
/// to row i is exactly shrink_k * 2 (h_i - mu_hat_k).
ad::Var sure_loss(ad::Tape& tape, const ad::Var& h, const std::vector<Index>& labels,
                  const ClusterStats& stats,
                  DegeneratePolicy policy = DegeneratePolicy::Error);

/// Monte-Carlo risk study. Exactly one of `tau` (hierarchical mode:
/// theta ~ Normal(0, tau2 I) per trial) or `theta_norm` (fixed theta =
/// theta_norm * e_1) must be set.
struct RiskBenchConfig {
  Index p = 10;
  double sigma = 1.0;
  std::optional<double> tau;
  std::optional<double> theta_norm;
  long trials = 10000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EstimatorRisk {
  double empirical_mse = 0.0;
  double ci95 = 0.0;
  std::optional<double> closed_form;
  long trials = 0;
};

/// Keyed by estimator name. Fixed-theta mode emits mle, js,
/// js_positive_part and js_risk_reduction (empirical paired reduction vs
/// the Stein-identity prediction (P-2)^2 sigma^4 E[1/|X|^2]).
/// Hierarchical mode emits mle/map against both the drawn theta and the
/// prior mean, plus the mean of `sure` (closed form P sigma2 tau2 /
/// (sigma2 + tau2), the Bayes risk of the posterior mean).
using RiskBenchReport = std::map<std::string, EstimatorRisk>;

RiskBenchReport risk_bench(const RiskBenchConfig& cfg);

}  // namespace shrinkcl
