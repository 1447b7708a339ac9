#pragma once

#include <random>

#include "dmn/tensor.hpp"

namespace dmn {

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  Scalar uniform(Scalar lo, Scalar hi) {
    return std::uniform_real_distribution<Scalar>(lo, hi)(eng_);
  }

  int uniform_int(int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(eng_);
  }

  uint64_t next_seed() { return eng_(); }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

// Uniform in [-s, s] with s = sqrt(1/fan_in).
inline Tensor init_uniform(Shape shape, int fan_in, Rng& rng, bool requires_grad = true) {
  Scalar s = std::sqrt(1.0 / (Scalar)fan_in);
  std::vector<Scalar> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-s, s);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline Tensor random_tensor(Shape shape, Rng& rng, Scalar lo = -1.0, Scalar hi = 1.0,
                            bool requires_grad = false) {
  std::vector<Scalar> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace dmn
