#include "lapcs/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace lapcs {

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  engine_.seed(seq);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ArgumentError("Rng::below: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() {
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
Tensor<T> normal_tensor(Dims dims, double stddev, Rng& rng) {
  Tensor<T> t(std::move(dims));
  for (auto& v : t.values()) v = static_cast<T>(stddev * rng.normal());
  return t;
}

double he_stddev(std::size_t fan_in, double slope) {
  if (fan_in == 0) throw ArgumentError("he_init: fan_in must be positive");
  return std::sqrt(2.0 / ((1.0 + slope * slope) * static_cast<double>(fan_in)));
}

template <typename T>
Tensor<T> he_init(Dims dims, std::size_t fan_in, double slope, Rng& rng) {
  return normal_tensor<T>(std::move(dims), he_stddev(fan_in, slope), rng);
}

template Tensor<float> normal_tensor(Dims, double, Rng&);
template Tensor<double> normal_tensor(Dims, double, Rng&);
template Tensor<float> he_init(Dims, std::size_t, double, Rng&);
template Tensor<double> he_init(Dims, std::size_t, double, Rng&);

}  // namespace lapcs
