#pragma once

#include "shrinkcl/common.hpp"
#include "shrinkcl/rng.hpp"

#include <vector>

namespace shrinkcl {

struct KmeansConfig {
  Index k = 2;
  int max_iters = 100;
  double tol = 1e-6;  // stop when the largest centroid shift falls below this
  int n_init = 10;
  enum class Init { KmeansPlusPlus, Random };
  Init init = Init::KmeansPlusPlus;

  void validate() const;
};

struct KmeansResult {
  std::vector<Index> labels;
  Matrix centroids;  // k x p, row c is cluster c's centre
  double inertia = 0.0;
  int best_restart = 0;
};

/// Lloyd iterations with D^2-weighted seeding, n_init restarts keeping
/// the lowest inertia (ties break toward the earlier restart), and empty
/// clusters re-seeded from the point farthest from its centroid. Fully
/// deterministic given the rng state.
KmeansResult kmeans(const Eigen::Ref<const Matrix>& points, const KmeansConfig& cfg,
                    Pcg32& rng);

/// Row-wise argmax of assignment probabilities; ties resolve to the
/// lowest index. Warns when every row is exactly uniform.
std::vector<Index> assign_final(const Eigen::Ref<const Matrix>& probs);

}  // namespace shrinkcl
