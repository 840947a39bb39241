#include "avc/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace avc {

GradCheckResult grad_check(const std::function<Tensor64()>& fn, std::vector<Tensor64> inputs,
                           const GradCheckOptions& options,
                           const std::vector<std::string>& labels) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor64 out = fn();
  out.backward();

  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }

  GradCheckResult result;
  RngStream rng(options.seed);
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor != 0 && coords.size() > options.max_coords_per_tensor) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + options.h;
      const double plus = fn().item();
      values[i] = saved - options.h;
      const double minus = fn().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.h);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max(options.floor, std::abs(a) + std::abs(numeric));
      ++result.coordinates;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        result.worst_tensor = k < labels.size() ? labels[k] : "input " + std::to_string(k);
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace avc
