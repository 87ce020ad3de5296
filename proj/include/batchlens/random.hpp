#ifndef BATCHLENS_RANDOM_HPP
#define BATCHLENS_RANDOM_HPP

#include <cstdint>
#include <random>

namespace batchlens {

using Rng = std::mt19937_64;

// Purpose tags for seed splitting. Each purpose gets its own stream so that,
// e.g., changing the number of batch draws never perturbs the initialization.
enum class Stream : std::uint64_t {
  basis = 1,
  init = 2,
  batch = 3,
  landscape = 4,
  trace = 5,
  sweep = 6,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent 64-bit seed from (root seed, purpose, counter).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream,
                                           std::uint64_t index = 0) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h ^ splitmix64(index));
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

}  // namespace batchlens

#endif  // BATCHLENS_RANDOM_HPP
