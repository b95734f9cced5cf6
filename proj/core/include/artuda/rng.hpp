#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace artuda {

// Deterministic random source used everywhere randomness is needed.
//
// All transforms are written out explicitly on top of std::mt19937_64 (whose
// output sequence is fixed by the standard), so streams are bit-identical
// across platforms and standard-library implementations. std::*_distribution
// is deliberately not used: its output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 bits of randomness.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; generates pairs, caches the spare.
  double normal();

  /// Unbiased integer in [0, n) via rejection sampling. n must be >= 1.
  std::uint64_t bounded(std::uint64_t n);

  /// Fisher-Yates shuffle driven by bounded().
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from a base seed and a stream name
/// (plus an optional index), via FNV-1a over the name and a splitmix64
/// finalizer. The formula is part of the reproducibility contract.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::uint64_t index);

}  // namespace artuda
