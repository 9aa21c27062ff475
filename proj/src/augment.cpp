#include "shrinkcl/augment.hpp"

namespace shrinkcl {

void AugmentConfig::validate() const {
  ensure(mask_fraction >= 0.0 && mask_fraction <= 1.0,
         "augment: mask_fraction must lie in [0, 1], got " + std::to_string(mask_fraction));
  ensure(noise_std >= 0.0,
         "augment: noise_std must be >= 0, got " + std::to_string(noise_std));
}

namespace {

// Per coordinate: one uniform for the mask decision, then (only when the
// coordinate survives and noise is on) one Gaussian. Interleaving keeps
// the stream layout independent of the other coordinates' outcomes.
Vector corrupt(const Eigen::Ref<const Vector>& x, const AugmentConfig& cfg, Pcg32& rng) {
  Vector out(x.size());
  for (Index j = 0; j < x.size(); ++j) {
    if (rng.next_double() < cfg.mask_fraction) {
      out(j) = 0.0;
    } else {
      out(j) = cfg.noise_enabled && cfg.noise_std > 0.0
                   ? x(j) + cfg.noise_std * rng.normal()
                   : x(j);
    }
  }
  return out;
}

}  // namespace

std::pair<Vector, Vector> augment_pair(const Eigen::Ref<const Vector>& x,
                                       const AugmentConfig& cfg, Pcg32& rng) {
  cfg.validate();
  Pcg32 rng_a(rng.next_u64(), 0xA);
  Pcg32 rng_b(rng.next_u64(), 0xB);
  return {corrupt(x, cfg, rng_a), corrupt(x, cfg, rng_b)};
}

Matrix augment_view(const Eigen::Ref<const Matrix>& x, const AugmentConfig& cfg,
                    std::uint64_t seed, std::uint64_t view_tag) {
  cfg.validate();
  Matrix out(x.rows(), x.cols());
  const std::uint64_t view_seed = mix64(seed, view_tag);
  for (Index i = 0; i < x.rows(); ++i) {
    Pcg32 rng(mix64(view_seed, static_cast<std::uint64_t>(i)), view_tag);
    out.row(i) = corrupt(x.row(i).transpose(), cfg, rng).transpose();
  }
  return out;
}

}  // namespace shrinkcl
