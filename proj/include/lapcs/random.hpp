#pragma once

#include <cstdint>
#include <random>

#include "lapcs/tensor.hpp"

namespace lapcs {

// The single source of randomness: mt19937_64 with Box-Muller normals. The
// standard distributions are avoided because their output is
// implementation-defined; every draw here is reproducible across toolchains.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  // Independent stream for (seed, stream), e.g. one per training step.
  Rng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

 private:
  std::mt19937_64 engine_;
};

template <typename T>
Tensor<T> normal_tensor(Dims dims, double stddev, Rng& rng);

// Kaiming-normal draw with the leaky-ReLU gain: std = sqrt(2 / ((1 + slope^2) * fan_in)).
template <typename T>
Tensor<T> he_init(Dims dims, std::size_t fan_in, double slope, Rng& rng);

double he_stddev(std::size_t fan_in, double slope);

}  // namespace lapcs
