#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace trajtok {

// Stream derivation for independent deterministic substreams (per video,
// per stage). splitmix64 finalizer over the combined words.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64(const std::string& s);

// Deterministic RNG. std::mt19937_64 supplies the raw stream; the
// distributions are implemented here because the standard library's are
// implementation-defined and would break cross-toolchain reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller. No spare caching so replay depends only on call count.
  double normal(double mean = 0.0, double stddev = 1.0);

  // Unbiased uniform index in [0, n). n must be >= 1.
  std::size_t index(std::size_t n);

  // Derived generator for an independent substream.
  Rng fork(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace trajtok
