#pragma once

#include <cmath>
#include <vector>

#include "avc/core/rng.hpp"
#include "avc/core/tensor.hpp"

namespace avc {

/// Fan-in scaled uniform draw U(-sqrt(6/fan_in), sqrt(6/fan_in)) for ReLU trunks.
template <class T>
Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in, RngStream& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in));
  std::vector<T> data(numel_of(shape));
  for (T& v : data) v = T(rng.uniform(-bound, bound));
  return Tensor<T>::from(std::move(shape), std::move(data));
}

}  // namespace avc
