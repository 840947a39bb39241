#include "avc/core/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace avc {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

}  // namespace detail

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> data(numel_of(shape), value);
  return from(std::move(shape), std::move(data), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (numel_of(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(numel_of(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <class T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw ShapeError("index rank mismatch for " + shape_str(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= node_->shape[axis]) throw ShapeError("index out of range for " + shape_str(shape()));
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

template <class T>
void Tensor<T>::backward() {
  if (numel() != 1) throw ShapeError("backward() needs a scalar, got " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; reversed it is a valid topological order.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node<T>* child = node->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out = detach();
  out.node_->requires_grad = node_->requires_grad;
  return out;
}

template <class T>
void ParameterSet<T>::check_unique(const std::string& name) const {
  if (find(name) != nullptr) throw Error("duplicate parameter name '" + name + "'");
}

template <class T>
Tensor<T> ParameterSet<T>::add_parameter(const std::string& name, Tensor<T> tensor) {
  check_unique(name);
  tensor.set_requires_grad(true);
  params_.push_back({name, tensor});
  return tensor;
}

template <class T>
Tensor<T> ParameterSet<T>::add_buffer(const std::string& name, Tensor<T> tensor) {
  check_unique(name);
  tensor.set_requires_grad(false);
  buffers_.push_back({name, tensor});
  return tensor;
}

template <class T>
const Tensor<T>* ParameterSet<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p.tensor;
  }
  for (const auto& b : buffers_) {
    if (b.name == name) return &b.tensor;
  }
  return nullptr;
}

template <class T>
Tensor<T>* ParameterSet<T>::find(const std::string& name) {
  return const_cast<Tensor<T>*>(std::as_const(*this).find(name));
}

template <class T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <class T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class Tensor<float>;
template class Tensor<double>;
template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace avc
