#pragma once

#include <cstdint>
#include <random>

#include "noisylab/config.h"

NOISYLAB_NAMESPACE_BEGIN

// 64-bit seeded generator. Streams for independent purposes (epoch shuffles,
// per-batch corruption noise, ...) are derived with derive() so a run can be
// resumed at any epoch without serializing generator state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0);

  std::uint64_t next() { return engine_(); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return normal_(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

NOISYLAB_NAMESPACE_END
