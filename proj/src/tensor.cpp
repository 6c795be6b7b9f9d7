#include "genrefuse/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace genrefuse {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return from_node(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
const detail::Node<T>& Tensor<T>::checked() const {
  if (!node_) throw ContractError("Tensor: use of an undefined tensor");
  return *node_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return checked().shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("Tensor::dim: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  }
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return checked().data.size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return checked().data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  checked();
  return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  const auto& n = checked();
  if (n.data.size() != 1) {
    throw DimensionError("Tensor::item on tensor of shape " + shape_str(n.shape));
  }
  return n.data[0];
}

template <typename T>
T Tensor<T>::at(std::size_t i, std::size_t j) const {
  const auto& n = checked();
  if (n.shape.size() != 2 || i >= n.shape[0] || j >= n.shape[1]) {
    throw DimensionError("Tensor::at(" + std::to_string(i) + "," + std::to_string(j) +
                         ") on " + shape_str(n.shape));
  }
  return n.data[i * n.shape[1] + j];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return checked().requires_grad;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !checked().grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  const auto& n = checked();
  if (n.grad.empty()) throw ContractError("Tensor::grad: no gradient has been accumulated");
  return n.grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  checked();
  return node_->ensure_grad();
}

template <typename T>
void Tensor<T>::zero_grad() {
  checked();
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::backward() const {
  const auto& root = checked();
  if (root.data.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) {
    throw ContractError("backward: loss does not depend on any tensor requiring grad");
  }

  // Iterative post-order DFS gives a topological order without recursion depth limits.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<const detail::Node<T>*> visited;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are per-pass; only leaves accumulate across calls.
  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), T(0));
  }
  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  const auto& n = checked();
  return from(n.shape, n.data, false);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace genrefuse
