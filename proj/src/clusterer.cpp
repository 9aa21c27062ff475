#include "shrinkcl/clusterer.hpp"

#include <cmath>
#include <limits>

namespace shrinkcl {

void KmeansConfig::validate() const {
  ensure(k >= 1, "kmeans: k must be >= 1");
  ensure(max_iters >= 1, "kmeans: max_iters must be >= 1");
  ensure(tol >= 0.0, "kmeans: tol must be >= 0");
  ensure(n_init >= 1, "kmeans: n_init must be >= 1");
}

namespace {

// Squared distances of every point to every centroid, clamped at zero.
Matrix pairwise_sq_dist(const Eigen::Ref<const Matrix>& x, const Vector& x_norms,
                        const Matrix& centroids) {
  Vector c_norms = centroids.rowwise().squaredNorm();
  Matrix d = (-2.0 * (x * centroids.transpose())).eval();
  d.colwise() += x_norms;
  d.rowwise() += c_norms.transpose();
  return d.cwiseMax(0.0);
}

std::vector<Index> argmin_rows(const Matrix& d) {
  std::vector<Index> labels(static_cast<std::size_t>(d.rows()));
  for (Index i = 0; i < d.rows(); ++i) {
    Index best = 0;
    double bestv = d(i, 0);
    for (Index c = 1; c < d.cols(); ++c) {
      if (d(i, c) < bestv) {
        bestv = d(i, c);
        best = c;
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

Matrix seed_centroids(const Eigen::Ref<const Matrix>& x, const Vector& x_norms,
                      const KmeansConfig& cfg, Pcg32& rng) {
  const Index n = x.rows();
  Matrix centroids(cfg.k, x.cols());
  if (cfg.init == KmeansConfig::Init::Random) {
    std::vector<Index> idx = shuffled_indices(n, rng);
    for (Index c = 0; c < cfg.k; ++c) centroids.row(c) = x.row(idx[static_cast<std::size_t>(c)]);
    return centroids;
  }
  // D^2-weighted seeding: each next seed is drawn with probability
  // proportional to its squared distance from the chosen set.
  centroids.row(0) = x.row(static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(n))));
  Vector d2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < cfg.k; ++c) {
    const double total = d2.sum();
    Index pick;
    if (total <= 0.0) {
      pick = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(n)));
    } else {
      double u = rng.next_double() * total;
      pick = n - 1;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    centroids.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }
  (void)x_norms;
  return centroids;
}

struct SingleRun {
  std::vector<Index> labels;
  Matrix centroids;
  double inertia = std::numeric_limits<double>::infinity();
};

SingleRun lloyd(const Eigen::Ref<const Matrix>& x, const Vector& x_norms,
                const KmeansConfig& cfg, Pcg32& rng) {
  SingleRun run;
  run.centroids = seed_centroids(x, x_norms, cfg, rng);
  const Index n = x.rows();
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    Matrix d = pairwise_sq_dist(x, x_norms, run.centroids);
    run.labels = argmin_rows(d);

    Matrix sums = Matrix::Zero(cfg.k, x.cols());
    std::vector<Index> counts(static_cast<std::size_t>(cfg.k), 0);
    for (Index i = 0; i < n; ++i) {
      const Index c = run.labels[static_cast<std::size_t>(i)];
      sums.row(c) += x.row(i);
      counts[static_cast<std::size_t>(c)] += 1;
    }
    Matrix next(cfg.k, x.cols());
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (Index c = 0; c < cfg.k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Re-seed an emptied cluster at the point currently worst served
        // (largest distance to its own centroid; ties to the lowest row).
        Index far = 0;
        double farv = -1.0;
        for (Index i = 0; i < n; ++i) {
          if (taken[static_cast<std::size_t>(i)]) continue;
          const double v = d(i, run.labels[static_cast<std::size_t>(i)]);
          if (v > farv) {
            farv = v;
            far = i;
          }
        }
        taken[static_cast<std::size_t>(far)] = true;
        next.row(c) = x.row(far);
      }
    }
    const double shift = (next - run.centroids).rowwise().norm().maxCoeff();
    run.centroids = next;
    if (shift <= cfg.tol) break;
  }
  // Final assignment against the final centroids, and the matching inertia.
  Matrix d = pairwise_sq_dist(x, x_norms, run.centroids);
  run.labels = argmin_rows(d);
  double inertia = 0.0;
  for (Index i = 0; i < n; ++i) inertia += d(i, run.labels[static_cast<std::size_t>(i)]);
  run.inertia = inertia;
  return run;
}

}  // namespace

KmeansResult kmeans(const Eigen::Ref<const Matrix>& x, const KmeansConfig& cfg,
                    Pcg32& rng) {
  cfg.validate();
  ensure(x.rows() >= 1 && x.cols() >= 1, "kmeans: empty input");
  ensure(x.rows() >= cfg.k,
         "kmeans: " + std::to_string(x.rows()) + " points cannot form " +
             std::to_string(cfg.k) + " clusters");
  ensure_finite(x, "kmeans: input");

  const Vector x_norms = x.rowwise().squaredNorm();
  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.n_init; ++r) {
    SingleRun run = lloyd(x, x_norms, cfg, rng);
    if (run.inertia < best.inertia) {
      best.inertia = run.inertia;
      best.labels = std::move(run.labels);
      best.centroids = std::move(run.centroids);
      best.best_restart = r;
    }
  }
  return best;
}

std::vector<Index> assign_final(const Eigen::Ref<const Matrix>& probs) {
  ensure(probs.rows() >= 1 && probs.cols() >= 1, "assign_final: empty input");
  std::vector<Index> labels(static_cast<std::size_t>(probs.rows()));
  Index uniform_rows = 0;
  for (Index i = 0; i < probs.rows(); ++i) {
    Index best = 0;
    double bestv = probs(i, 0);
    for (Index c = 1; c < probs.cols(); ++c) {
      if (probs(i, c) > bestv) {
        bestv = probs(i, c);
        best = c;
      }
    }
    if (probs.row(i).minCoeff() == probs.row(i).maxCoeff()) uniform_rows += 1;
    labels[static_cast<std::size_t>(i)] = best;
  }
  if (uniform_rows == probs.rows()) {
    warn("assign_final: every assignment row is uniform; labels default to 0");
  }
  return labels;
}

}  // namespace shrinkcl
