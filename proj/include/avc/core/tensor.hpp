#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "avc/core/error.hpp"

namespace avc {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

bool grad_enabled();
void set_grad_enabled(bool on);

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Disables graph construction for its lifetime (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled()) { detail::set_grad_enabled(false); }
  ~NoGradGuard() { detail::set_grad_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor with reverse-mode autodiff.
///
/// A Tensor is a cheap handle: copies share storage and graph position.
/// Use clone() for an independent deep copy.
template <class T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  static constexpr DType dtype() { return dtype_of<T>(); }

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  /// Empty until backward() reaches this tensor.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  /// Seeds d(this)/d(this) = 1 and propagates through the graph.
  /// Only valid on single-element tensors.
  void backward();
  void zero_grad() { node_->grad.clear(); }

  Tensor detach() const;
  Tensor clone() const;

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

namespace detail {

/// Creates an op result. When any input needs a gradient (and grad mode is
/// on) the result joins the graph with `backward`.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || (in && in->requires_grad);
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

}  // namespace detail

/// Named trainable tensor.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

/// Named non-trainable state (batch-norm running statistics).
template <class T>
struct Buffer {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered registry of a model's parameters and buffers.
template <class T>
class ParameterSet {
 public:
  Tensor<T> add_parameter(const std::string& name, Tensor<T> tensor);
  Tensor<T> add_buffer(const std::string& name, Tensor<T> tensor);

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::vector<Buffer<T>>& buffers() { return buffers_; }
  const std::vector<Buffer<T>>& buffers() const { return buffers_; }

  const Tensor<T>* find(const std::string& name) const;
  Tensor<T>* find(const std::string& name);
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  void check_unique(const std::string& name) const;
  std::vector<Parameter<T>> params_;
  std::vector<Buffer<T>> buffers_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace avc
