#include "shrinkcl/contrastive.hpp"

#include <cmath>
#include <limits>

namespace shrinkcl {

void ContrastConfig::validate() const {
  ensure(tau_instance > 0.0, "contrast: tau_instance must be positive");
  ensure(tau_cluster > 0.0, "contrast: tau_cluster must be positive");
  ensure(entropy_eps > 0.0 && entropy_eps <= 1e-6,
         "contrast: entropy_eps must be in (0, 1e-6]");
}

double cos_sim(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
  ensure(u.size() == v.size(), "cos_sim: dimension mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  ensure(nu > 0.0 && nv > 0.0, "cos_sim: zero-norm vector");
  return u.dot(v) / (nu * nv);
}

double cosine_euclid_identity_residual(const Eigen::Ref<const Vector>& u,
                                       const Eigen::Ref<const Vector>& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  ensure(nu > 0.0 && nv > 0.0, "cosine_euclid_identity_residual: zero-norm vector");
  const double via_dist =
      (u.squaredNorm() + v.squaredNorm() - (u - v).squaredNorm()) / (2.0 * nu * nv);
  return std::abs(cos_sim(u, v) - via_dist);
}

namespace {

Matrix normalized_rows(const Eigen::Ref<const Matrix>& m, const char* what) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    ensure(n > 0.0, std::string(what) + ": zero-norm row " + std::to_string(i));
    out.row(i) = m.row(i) / n;
  }
  return out;
}

// Plain-value twin of ad::info_nce_rows; kept numerically identical.
double info_nce_mean(const Matrix& s, double tau, bool exclude_self, Index half) {
  const Index m = s.rows();
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
    total += rowmax + std::log(acc) - s(i, (i + half) % m) / tau;
  }
  return total / static_cast<double>(m);
}

double negentropy_of_marginal(const Eigen::Ref<const Matrix>& y, double eps) {
  const double total = y.sum();
  ensure(total > 0.0, "cluster_loss: probability mass must be positive");
  double r = 0.0;
  for (Index c = 0; c < y.cols(); ++c) {
    const double p = y.col(c).sum() / total;
    r += p * std::log(std::max(p, eps));
  }
  return r;
}

void check_view_pair(const Eigen::Ref<const Matrix>& a,
                     const Eigen::Ref<const Matrix>& b, const char* what) {
  ensure(a.rows() == b.rows() && a.cols() == b.cols(),
         std::string(what) + ": views must have identical shape");
  ensure(a.rows() >= 1 && a.cols() >= 1, std::string(what) + ": empty views");
}

void check_prob_rows(const Eigen::Ref<const Matrix>& y, const char* what) {
  for (Index i = 0; i < y.rows(); ++i) {
    ensure((y.row(i).array() >= 0.0).all(),
           std::string(what) + ": negative probability in row " + std::to_string(i));
    ensure(std::abs(y.row(i).sum() - 1.0) <= 1e-9,
           std::string(what) + ": row " + std::to_string(i) + " does not sum to 1");
  }
}

}  // namespace

double instance_loss(const Eigen::Ref<const Matrix>& za,
                     const Eigen::Ref<const Matrix>& zb, const ContrastConfig& cfg) {
  cfg.validate();
  check_view_pair(za, zb, "instance_loss");
  const Index n = za.rows();
  Matrix z(2 * n, za.cols());
  z.topRows(n) = za;
  z.bottomRows(n) = zb;
  const Matrix zn = normalized_rows(z, "instance_loss");
  const Matrix s = zn * zn.transpose();
  return info_nce_mean(s, cfg.tau_instance, cfg.exclude_self, n);
}

ad::Var instance_loss(ad::Tape& tape, const ad::Var& za, const ad::Var& zb,
                      const ContrastConfig& cfg) {
  cfg.validate();
  check_view_pair(za.value(), zb.value(), "instance_loss");
  (void)tape;
  ad::Var z = ad::concat_rows(za, zb);
  ad::Var zn = ad::row_l2_normalize(z);
  ad::Var s = ad::matmul(zn, ad::transpose(zn));
  return ad::info_nce_rows(s, cfg.tau_instance, cfg.exclude_self, za.rows());
}

double cluster_loss(const Eigen::Ref<const Matrix>& ya,
                    const Eigen::Ref<const Matrix>& yb, const ContrastConfig& cfg) {
  cfg.validate();
  check_view_pair(ya, yb, "cluster_loss");
  check_prob_rows(ya, "cluster_loss");
  check_prob_rows(yb, "cluster_loss");
  const Index k = ya.cols();
  Matrix c(2 * k, ya.rows());
  c.topRows(k) = ya.transpose();
  c.bottomRows(k) = yb.transpose();
  const Matrix cn = normalized_rows(c, "cluster_loss");
  const Matrix s = cn * cn.transpose();
  const double pair = info_nce_mean(s, cfg.tau_cluster, cfg.exclude_self, k);
  const double reg = negentropy_of_marginal(ya, cfg.entropy_eps) +
                     negentropy_of_marginal(yb, cfg.entropy_eps);
  return cfg.strict_entropy_sign ? pair - reg : pair + reg;
}

ad::Var cluster_loss(ad::Tape& tape, const ad::Var& ya, const ad::Var& yb,
                     const ContrastConfig& cfg) {
  cfg.validate();
  check_view_pair(ya.value(), yb.value(), "cluster_loss");
  (void)tape;
  ad::Var c = ad::concat_rows(ad::transpose(ya), ad::transpose(yb));
  ad::Var cn = ad::row_l2_normalize(c);
  ad::Var s = ad::matmul(cn, ad::transpose(cn));
  ad::Var pair = ad::info_nce_rows(s, cfg.tau_cluster, cfg.exclude_self, ya.cols());
  ad::Var reg = ad::add(ad::marginal_negentropy(ya, cfg.entropy_eps),
                        ad::marginal_negentropy(yb, cfg.entropy_eps));
  return cfg.strict_entropy_sign ? ad::sub(pair, reg) : ad::add(pair, reg);
}

double total_loss(double l_sure, double l_ins, double l_clu, double alpha, double beta) {
  return l_sure + alpha * l_ins + beta * l_clu;
}

}  // namespace shrinkcl
