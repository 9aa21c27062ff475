#pragma once

#include "shrinkcl/common.hpp"
#include "shrinkcl/rng.hpp"

#include <cstdint>
#include <utility>

namespace shrinkcl {

/// Stochastic corruption applied to expression vectors: each coordinate
/// is zeroed independently with probability mask_fraction, then, when
/// enabled, i.i.d. Normal(0, noise_std^2) is added to the surviving
/// coordinates. Masked coordinates stay exactly zero.
struct AugmentConfig {
  double mask_fraction = 0.2;
  double noise_std = 0.15;
  bool noise_enabled = true;

  void validate() const;
};

/// Two views of one vector, drawn from independent sub-streams derived
/// from `rng` so the views are conditionally independent given the input.
std::pair<Vector, Vector> augment_pair(const Eigen::Ref<const Vector>& x,
                                       const AugmentConfig& cfg, Pcg32& rng);

/// One corrupted view of every row of `x`. The draw for row i depends
/// only on (seed, view_tag, i), so the corruption of a given cell is
/// independent of batch composition and identical across loss variants
/// run with the same seed.
Matrix augment_view(const Eigen::Ref<const Matrix>& x, const AugmentConfig& cfg,
                    std::uint64_t seed, std::uint64_t view_tag);

}  // namespace shrinkcl
