#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dptbench/types.hpp"

namespace dptbench {

// Derives an independent stream seed from a root seed and up to two lane
// indices (splitmix64 finalizer). Seed-derived streams keep parallel trials
// and per-sequence corruption reproducible.
std::uint64_t mix_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0);

// Deterministic random stream. std::mt19937_64 output is fully specified by
// the standard; the distribution mappings below are written out explicitly
// because std::uniform_*_distribution is implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1), 53-bit resolution.
  Scalar uniform() {
    return static_cast<Scalar>(next_u64() >> 11) * 0x1.0p-53;
  }

  Scalar uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }

  // [0, n). Modulo mapping; the bias is ~n/2^64 and irrelevant at this scale.
  std::int64_t uniform_int(std::int64_t n) {
    return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Standard normal via Box-Muller. Consumes exactly two engine words per
  // draw (the sine branch is discarded) so draw order stays predictable.
  Scalar normal();

  // Normal(0, stddev) resampled until |z| <= clip_sigmas standard deviations.
  Scalar truncated_normal(Scalar stddev, Scalar clip_sigmas = 2.0);

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(static_cast<std::int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dptbench
