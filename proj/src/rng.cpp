#include "dptbench/rng.hpp"

#include <cmath>
#include <numbers>

namespace dptbench {

std::uint64_t mix_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b) {
  auto finalize = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = finalize(root);
  h = finalize(h ^ finalize(a + 0x517cc1b727220a95ULL));
  h = finalize(h ^ finalize(b + 0x2545f4914f6cdd1dULL));
  return h;
}

Scalar RngStream::normal() {
  Scalar u1 = uniform();
  const Scalar u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const Scalar r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * std::numbers::pi_v<Scalar> * u2);
}

Scalar RngStream::truncated_normal(Scalar stddev, Scalar clip_sigmas) {
  Scalar z = normal();
  while (std::abs(z) > clip_sigmas) z = normal();
  return z * stddev;
}

}  // namespace dptbench
