#pragma once

#include <random>

#include "gptlab/core/random.hpp"
#include "gptlab/core/tensor.hpp"

namespace gptlab::testing {

inline Tensor uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace gptlab::testing
