#include "shrinkcl/shrinkage.hpp"

#include "shrinkcl/rng.hpp"

#include <cmath>

namespace shrinkcl {

void GaussianHierarchy::validate() const {
  ensure(mu.size() >= 1, "GaussianHierarchy: mu must be non-empty");
  ensure(tau2 >= 0.0, "GaussianHierarchy: tau2 must be >= 0");
  ensure(sigma2 >= 0.0, "GaussianHierarchy: sigma2 must be >= 0");
  ensure(tau2 + sigma2 > 0.0, "GaussianHierarchy: tau2 + sigma2 must be positive");
}

Vector js_estimate(const Eigen::Ref<const Vector>& x, double sigma2, bool positive_part) {
  const Index p = x.size();
  ensure(p >= 3, "js_estimate: dimension must be >= 3, got " + std::to_string(p));
  ensure(sigma2 >= 0.0, "js_estimate: sigma2 must be >= 0");
  const double norm2 = x.squaredNorm();
  ensure(norm2 > 0.0, "js_estimate: zero observation");
  double factor = 1.0 - static_cast<double>(p - 2) * sigma2 / norm2;
  if (positive_part && factor < 0.0) factor = 0.0;
  return factor * x;
}

Vector map_estimate(const Eigen::Ref<const Vector>& x, const GaussianHierarchy& h) {
  h.validate();
  ensure(x.size() == h.mu.size(), "map_estimate: dimension mismatch");
  const double w = h.tau2 / (h.tau2 + h.sigma2);
  return w * x + (1.0 - w) * h.mu;
}

double sure(const Eigen::Ref<const Vector>& x, const GaussianHierarchy& h) {
  h.validate();
  ensure(x.size() == h.mu.size(), "sure: dimension mismatch");
  const double p = static_cast<double>(x.size());
  const double shift = h.sigma2 / (h.tau2 + h.sigma2);  // 1 - d theta_hat / d x
  const double shift_norm2 = (shift * (h.mu - x)).squaredNorm();
  const double divergence = p * h.tau2 / (h.tau2 + h.sigma2);
  return -p * h.sigma2 + shift_norm2 + 2.0 * h.sigma2 * divergence;
}

double ClusterStats::shrink_factor(Index cluster) const {
  return sigma2_k(cluster) / (tau2_k(cluster) + sigma2_k(cluster));
}

void ClusterStats::validate() const {
  ensure(k >= 1 && p >= 1, "ClusterStats: empty");
  ensure(mu_hat.rows() == k && mu_hat.cols() == p &&
             sigma2_pk.rows() == k && sigma2_pk.cols() == p &&
             sigma2_k.size() == k && tau2_k.size() == k &&
             static_cast<Index>(n_k.size()) == k &&
             static_cast<Index>(usable.size()) == k,
         "ClusterStats: inconsistent shapes");
}

ClusterStats cluster_stats(const Eigen::Ref<const Matrix>& h,
                           const std::vector<Index>& labels, Index k) {
  const Index n = h.rows();
  const Index p = h.cols();
  ensure(n >= 1 && p >= 1, "cluster_stats: empty embedding matrix");
  ensure(static_cast<Index>(labels.size()) == n,
         "cluster_stats: labels length " + std::to_string(labels.size()) +
             " does not match " + std::to_string(n) + " rows");
  ensure(k >= 1, "cluster_stats: k must be >= 1");

  ClusterStats s;
  s.k = k;
  s.p = p;
  s.mu_hat = Matrix::Zero(k, p);
  s.sigma2_pk = Matrix::Zero(k, p);
  s.sigma2_k = Vector::Zero(k);
  s.tau2_k = Vector::Zero(k);
  s.n_k.assign(static_cast<std::size_t>(k), 0);
  s.usable.assign(static_cast<std::size_t>(k), false);

  for (Index i = 0; i < n; ++i) {
    const Index c = labels[static_cast<std::size_t>(i)];
    ensure(c >= 0 && c < k,
           "cluster_stats: label " + std::to_string(c) + " at row " +
               std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
    s.n_k[static_cast<std::size_t>(c)] += 1;
    s.mu_hat.row(c) += h.row(i);
  }
  for (Index c = 0; c < k; ++c) {
    if (s.n_k[static_cast<std::size_t>(c)] > 0) {
      s.mu_hat.row(c) /= static_cast<double>(s.n_k[static_cast<std::size_t>(c)]);
    }
  }
  for (Index i = 0; i < n; ++i) {
    const Index c = labels[static_cast<std::size_t>(i)];
    s.sigma2_pk.row(c) += (h.row(i) - s.mu_hat.row(c)).array().square().matrix();
  }
  for (Index c = 0; c < k; ++c) {
    const Index nc = s.n_k[static_cast<std::size_t>(c)];
    if (nc >= 2) {
      s.sigma2_pk.row(c) /= static_cast<double>(nc - 1);
      s.sigma2_k(c) = s.sigma2_pk.row(c).mean();
      s.tau2_k(c) = s.sigma2_k(c) / static_cast<double>(nc);
      s.usable[static_cast<std::size_t>(c)] = s.sigma2_k(c) > 0.0;
    } else {
      s.sigma2_pk.row(c).setZero();
    }
  }
  return s;
}

namespace {

// Shared validation; returns per-row weights (shrink factor, or 0 for
// skipped rows) so the plain and tape paths stay in lockstep.
Vector sure_loss_weights(const Eigen::Ref<const Matrix>& h,
                         const std::vector<Index>& labels, const ClusterStats& stats,
                         DegeneratePolicy policy) {
  stats.validate();
  ensure(h.cols() == stats.p, "sure_loss: embedding width does not match statistics");
  ensure(static_cast<Index>(labels.size()) == h.rows(),
         "sure_loss: labels length does not match rows");
  Vector w(h.rows());
  for (Index i = 0; i < h.rows(); ++i) {
    const Index c = labels[static_cast<std::size_t>(i)];
    ensure(c >= 0 && c < stats.k,
           "sure_loss: label " + std::to_string(c) + " outside [0, " +
               std::to_string(stats.k) + ")");
    if (!stats.usable[static_cast<std::size_t>(c)]) {
      ensure(policy == DegeneratePolicy::Skip,
             "sure_loss: row " + std::to_string(i) + " labeled with degenerate cluster " +
                 std::to_string(c));
      w(i) = 0.0;
    } else {
      w(i) = stats.shrink_factor(c);
    }
  }
  return w;
}

}  // namespace

double sure_loss(const Eigen::Ref<const Matrix>& h, const std::vector<Index>& labels,
                 const ClusterStats& stats, DegeneratePolicy policy) {
  const Vector w = sure_loss_weights(h, labels, stats, policy);
  const double p = static_cast<double>(stats.p);
  double total = 0.0;
  for (Index i = 0; i < h.rows(); ++i) {
    if (w(i) == 0.0) continue;
    const Index c = labels[static_cast<std::size_t>(i)];
    const double quad = (stats.mu_hat.row(c) - h.row(i)).squaredNorm();
    total += w(i) * (quad + p * (stats.tau2_k(c) - stats.sigma2_k(c)));
  }
  return total;
}

ad::Var sure_loss(ad::Tape& tape, const ad::Var& h, const std::vector<Index>& labels,
                  const ClusterStats& stats, DegeneratePolicy policy) {
  const Vector w = sure_loss_weights(h.value(), labels, stats, policy);
  Matrix v(1, 1);
  v(0, 0) = sure_loss(h.value(), labels, stats, policy);

  std::size_t ph = tape.checked_id(h);
  Matrix mu = stats.mu_hat;
  std::vector<Index> lab = labels;
  return tape.make_node(std::move(v), {ph},
                        [ph, w, mu, lab](ad::Tape& t, std::size_t self) {
                          double g = t.grad_of(self)(0, 0);
                          const Matrix& hv = t.value_of(ph);
                          Matrix dh(hv.rows(), hv.cols());
                          for (Index i = 0; i < hv.rows(); ++i) {
                            const Index c = lab[static_cast<std::size_t>(i)];
                            dh.row(i) = (2.0 * g * w(i)) * (hv.row(i) - mu.row(c));
                          }
                          t.accumulate(ph, dh);
                        });
}

// ---- Monte-Carlo risk bench ----------------------------------------------

void RiskBenchConfig::validate() const {
  ensure(p >= 3, "risk_bench: p must be >= 3");
  ensure(sigma > 0.0, "risk_bench: sigma must be positive");
  ensure(trials >= 1000, "risk_bench: trials must be >= 1000");
  ensure(tau.has_value() != theta_norm.has_value(),
         "risk_bench: set exactly one of tau (hierarchical) or theta_norm (fixed)");
  if (tau) ensure(*tau >= 0.0, "risk_bench: tau must be >= 0");
  if (theta_norm) ensure(*theta_norm >= 0.0, "risk_bench: theta_norm must be >= 0");
}

namespace {

struct RunningStat {
  double sum = 0.0;
  double sumsq = 0.0;
  long n = 0;
  void add(double v) {
    sum += v;
    sumsq += v * v;
    n += 1;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double ci95() const {
    const double m = mean();
    const double var = (sumsq - static_cast<double>(n) * m * m) /
                       static_cast<double>(n - 1);
    return 1.96 * std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  }
  EstimatorRisk risk(std::optional<double> closed = std::nullopt) const {
    return EstimatorRisk{mean(), ci95(), closed, n};
  }
};

}  // namespace

RiskBenchReport risk_bench(const RiskBenchConfig& cfg) {
  cfg.validate();
  const Index p = cfg.p;
  const double pd = static_cast<double>(p);
  const double s2 = cfg.sigma * cfg.sigma;
  Pcg32 rng(cfg.seed);
  RiskBenchReport report;

  if (cfg.theta_norm) {
    Vector theta = Vector::Zero(p);
    theta(0) = *cfg.theta_norm;  // direction is irrelevant by spherical symmetry
    RunningStat mle, js, js_pp, reduction, inv_norm2;
    for (long t = 0; t < cfg.trials; ++t) {
      Vector x(p);
      for (Index i = 0; i < p; ++i) x(i) = theta(i) + cfg.sigma * rng.normal();
      const double mle_err = (x - theta).squaredNorm();
      const double js_err = (js_estimate(x, s2, false) - theta).squaredNorm();
      mle.add(mle_err);
      js.add(js_err);
      js_pp.add((js_estimate(x, s2, true) - theta).squaredNorm());
      reduction.add(mle_err - js_err);
      inv_norm2.add(1.0 / x.squaredNorm());
    }
    report["mle"] = mle.risk(pd * s2);
    report["js"] = js.risk();
    report["js_positive_part"] = js_pp.risk();
    const double predicted =
        (pd - 2.0) * (pd - 2.0) * s2 * s2 * inv_norm2.mean();
    report["js_risk_reduction"] = reduction.risk(predicted);
  } else {
    const double t2 = *cfg.tau * *cfg.tau;
    GaussianHierarchy h{Vector::Zero(p), t2, s2};
    RunningStat mle_theta, mle_mu, map_theta, map_mu, sure_stat;
    for (long t = 0; t < cfg.trials; ++t) {
      Vector theta(p), x(p);
      for (Index i = 0; i < p; ++i) theta(i) = *cfg.tau * rng.normal();
      for (Index i = 0; i < p; ++i) x(i) = theta(i) + cfg.sigma * rng.normal();
      const Vector est = map_estimate(x, h);
      mle_theta.add((x - theta).squaredNorm());
      mle_mu.add(x.squaredNorm());
      map_theta.add((est - theta).squaredNorm());
      map_mu.add(est.squaredNorm());
      sure_stat.add(sure(x, h));
    }
    const double bayes = pd * s2 * t2 / (s2 + t2);
    report["mle_vs_theta"] = mle_theta.risk(pd * s2);
    report["mle_vs_prior_mean"] = mle_mu.risk(pd * (s2 + t2));
    report["map_vs_theta"] = map_theta.risk(bayes);
    report["map_vs_prior_mean"] = map_mu.risk(pd * t2 * t2 / (s2 + t2));
    report["sure"] = sure_stat.risk(bayes);
  }
  return report;
}

}  // namespace shrinkcl
