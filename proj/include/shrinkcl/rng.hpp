#pragma once

#include "shrinkcl/common.hpp"

#include <cstdint>
#include <vector>

namespace shrinkcl {

/// PCG32 (XSH-RR 64/32, O'Neill). Chosen over std::mt19937 because the
/// integer stream is fully specified here and therefore identical across
/// standard libraries and platforms. Gaussian draws use the Marsaglia
/// polar transform on 53-bit uniforms, with the usual cached spare.
class Pcg32 {
 public:
  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53-bit resolution.
  double next_double();

  /// Standard normal draw.
  double normal();
  double normal(double mean, double std);

  /// Uniform integer in [0, bound); rejection sampling, no modulo bias.
  std::uint64_t next_below(std::uint64_t bound);

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// splitmix64 finalizer; used to derive independent sub-stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Combines a base seed with a stream tag into a derived seed.
std::uint64_t mix64(std::uint64_t seed, std::uint64_t tag);

/// rows x cols matrix of independent Normal(mean, std^2) draws, filled in
/// row-major order so a given seed always yields the same matrix.
/// std == 0 produces the constant matrix without consuming draws.
Matrix gaussian_sample(Pcg32& rng, Index rows, Index cols, double mean, double std);

/// Fisher-Yates permutation of 0..n-1.
std::vector<Index> shuffled_indices(Index n, Pcg32& rng);

template <typename T>
void shuffle(std::vector<T>& v, Pcg32& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace shrinkcl
