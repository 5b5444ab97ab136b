#pragma once

#include <vector>

#include "clvqa/rng.hpp"
#include "clvqa/tensor.hpp"

namespace clvqa::testing {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0, bool grad = true) {
  return Tensor::uniform(std::move(shape), rng, lo, hi, grad);
}

inline std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

}  // namespace clvqa::testing
