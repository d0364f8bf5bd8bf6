#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace fineas {

// Deterministic random source used everywhere randomness is needed.
//
// The core engine is std::mt19937_64, whose output sequence is fully
// specified by the C++ standard, so identical seeds give identical draws
// on every platform. Distribution draws are hand-rolled below (the
// standard leaves <random> distributions implementation-defined):
//
//   - uniform_below(n): rejection sampling on the raw 64-bit stream
//   - uniform_real():   53-bit mantissa trick, value in [0, 1)
//   - shuffle():        Fisher-Yates from the back, one uniform_below
//                       draw per position i = n-1 .. 1
//
// Artifacts that record a PRNG name record "mt19937_64".
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed_engine(seed)) {}

  uint64_t next_u64() { return state_(); }

  // Uniform integer in [0, n). n must be >= 1.
  uint64_t uniform_below(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = state_();
    while (x >= limit) x = state_();
    return x % n;
  }

  // Uniform real in [0, 1) with 53 random bits.
  double uniform_real() {
    return static_cast<double>(state_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform_real();
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  // mt19937_64 is seeded with the raw 64-bit seed (single-value seeding,
  // also fully specified by the standard).
  static std::mt19937_64 seed_engine(uint64_t seed) {
    return std::mt19937_64(seed);
  }

  std::mt19937_64 state_;
};

// Derives an independent stream seed from a master seed, splitmix64-style.
// Used to give ingest shuffling, parameter init, per-epoch shuffles and
// dropout their own documented streams off one user-facing seed.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace fineas
