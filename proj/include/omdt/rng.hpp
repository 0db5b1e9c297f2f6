#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace omdt {

/// One step of the SplitMix64 mixer.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives an independent stream seed from (root, stream index).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept;

/// Seeded generator with platform-independent output.
///
/// std::mt19937_64 is bit-exact across standard libraries but the std
/// distributions are not, so conversions to doubles and bounded integers
/// are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace omdt
