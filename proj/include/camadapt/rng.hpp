#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace camadapt {

// Deterministic PRNG with a fully specified output sequence. The standard
// <random> distributions are implementation-defined, which would break the
// bitwise reproducibility contract across standard libraries, so uniform and
// normal variates are generated here from a splitmix64 core.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes two draws per call.
  double normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n). Lemire multiply-shift; n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

// Derives an independent stream seed from a base seed and a stream tag, so
// one run-level seed can feed data generation, init, training and splitting
// without the draws of one stage shifting another.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  Rng mixer(base ^ (0xa0761d6478bd642full * (stream + 1)));
  return mixer.next_u64();
}

}  // namespace camadapt
