#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mmner/tensor.hpp"

namespace mmner {

/// Seeded generator with platform-independent real draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) from the top 53 bits of one engine draw.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Glorot-uniform matrix for a [fan_in × fan_out] weight.
inline ad::Tensor xavier(Rng& rng, std::size_t fan_in, std::size_t fan_out, bool requires_grad = true) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = rng.uniform(-limit, limit);
  return ad::Tensor::from({fan_in, fan_out}, std::move(v), requires_grad);
}

inline ad::Tensor uniform_tensor(Rng& rng, ad::Shape shape, double lo, double hi, bool requires_grad = false) {
  std::vector<double> v(ad::element_count(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return ad::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace mmner
