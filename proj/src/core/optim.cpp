#include "avc/core/optim.hpp"

#include <cmath>

namespace avc {

template <class T>
void SgdNesterov<T>::step(ParameterSet<T>& params) {
  auto& list = params.parameters();
  if (velocity_.size() != list.size()) {
    velocity_.clear();
    for (const auto& p : list) velocity_.emplace_back(p.tensor.numel(), T(0));
  }
  // Validate everything first so a bad gradient leaves the model untouched.
  for (const auto& p : list) {
    if (!p.tensor.has_grad()) continue;
    if (p.tensor.grad().size() != p.tensor.numel()) {
      throw ShapeError("gradient of '" + p.name + "' does not match its shape");
    }
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  const T lr = T(options_.lr), mu = T(options_.momentum), wd = T(options_.weight_decay);
  for (std::size_t k = 0; k < list.size(); ++k) {
    auto& tensor = list[k].tensor;
    auto theta = tensor.mutable_data();
    auto grad = tensor.grad();
    auto& v = velocity_[k];
    const bool has = !grad.empty();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const T g = (has ? grad[i] : T(0)) + wd * theta[i];
      v[i] = mu * v[i] + g;
      theta[i] -= lr * (g + mu * v[i]);
    }
  }
}

template class SgdNesterov<float>;
template class SgdNesterov<double>;

}  // namespace avc
