#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace xlenc {

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

/// Child seed for a labelled stream. Streams with different labels are
/// independent, so adding a consumer never shifts another one's sequence.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

/// Portable generator: std::mt19937_64 has a fully specified output
/// sequence, and the conversions below are ours, so draws are identical on
/// every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Unbiased integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::mt19937_64 engine_;
};

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace xlenc
