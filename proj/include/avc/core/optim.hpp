#pragma once

#include <vector>

#include "avc/core/tensor.hpp"

namespace avc {

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// SGD with Nesterov momentum; weight decay is folded into the gradient.
///
///   g = grad + wd * theta
///   v = mu * v + g
///   theta -= lr * (g + mu * v)
template <class T>
class SgdNesterov {
 public:
  explicit SgdNesterov(SgdOptions options) : options_(options) {}

  /// Applies one update to every parameter of `params`. Parameters that never
  /// received a gradient are treated as having a zero data gradient.
  /// Throws NumericError naming the parameter on a non-finite gradient.
  void step(ParameterSet<T>& params);

  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }
  const SgdOptions& options() const { return options_; }
  const std::vector<std::vector<T>>& momentum_buffers() const { return velocity_; }

 private:
  SgdOptions options_;
  std::vector<std::vector<T>> velocity_;
};

extern template class SgdNesterov<float>;
extern template class SgdNesterov<double>;

}  // namespace avc
