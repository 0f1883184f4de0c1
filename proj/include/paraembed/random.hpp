#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace paraembed {

// All seeded randomness goes through mt19937_64 plus the two conversions
// below. The std distributions are implementation-defined and would make
// seeded output differ between standard libraries.
using Rng = std::mt19937_64;

// Uniform integer in [0, n) by rejection sampling on the raw 64-bit draw.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Fisher-Yates, walking from the back: swap(i, uniform_index(i + 1)).
template <class T>
void fisher_yates(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace paraembed
