// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace rdopt {

// Distinct sub-streams derived from one master seed. Every stochastic
// operation owns a (stream, index) slot so that runs are reproducible
// and independent tasks can execute in any order or in parallel.
enum class Stream : std::uint64_t {
  kDrop = 1,
  kSmallScale = 2,
  kPilotNoise = 3,
  kGa = 4,
  kDataset = 5,
  kTrain = 6,
  kSample = 7,
  kMonteCarlo = 8,
  kInit = 9,
  kHoldout = 10,
  kBench = 11,
};

// splitmix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
  std::uint64_t s = splitmix64(master ^ (static_cast<std::uint64_t>(stream) * 0xd6e8feb86659fd93ULL));
  return splitmix64(s ^ index);
}

// Seeded random source wrapping the standard engine plus the draws the
// toolkit needs. Deterministic given the seed within a single build.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

  double gaussian() { return normal_(engine_); }

  // CN(0, 1): unit-variance circularly-symmetric complex Gaussian.
  std::complex<double> cgaussian() {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    const double re = normal_(engine_);
    const double im = normal_(engine_);
    return {re * kInvSqrt2, im * kInvSqrt2};
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace rdopt
