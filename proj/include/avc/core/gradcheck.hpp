#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "avc/core/rng.hpp"
#include "avc/core/tensor.hpp"

namespace avc {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;  // label of the tensor holding the worst coordinate
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

struct GradCheckOptions {
  double h = 1e-5;
  /// 0 checks every coordinate; otherwise at most this many coordinates per
  /// tensor, chosen by `seed`.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Lower bound of the relative-error denominator. Gradients smaller than
  /// this are effectively compared in absolute terms.
  double floor = 1e-8;
};

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences. The relative error per coordinate is
/// |analytic - numeric| / max(floor, |analytic| + |numeric|).
///
/// `fn` must rebuild the graph on every call from the current values of
/// `inputs`.
GradCheckResult grad_check(const std::function<Tensor64()>& fn, std::vector<Tensor64> inputs,
                           const GradCheckOptions& options = {},
                           const std::vector<std::string>& labels = {});

}  // namespace avc
