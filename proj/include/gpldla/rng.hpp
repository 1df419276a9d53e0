#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "gpldla/tensor.hpp"

namespace gpldla {

// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);

// Seeded random stream with a platform-independent sample sequence.
//
// Only the Mersenne Twister engine from the standard library is used; the
// uniform/normal transforms are implemented here because the standard
// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  // Child stream for (this seed, stream index), e.g. one per episode.
  Rng split(std::uint64_t stream) const;
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n), unbiased.
  std::size_t uniform_index(std::size_t n);
  double normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// I.i.d. standard normal tensor.
Tensor normal_sample(Rng& rng, const Shape& shape);

}  // namespace gpldla
