#pragma once

// Dense row-major tensor with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared node. Forward ops create new
// nodes that remember their parents and a closure that pushes the node's
// gradient back into them; Tensor::backward() walks that graph once in
// reverse topological order. Instantiated for float (training) and double
// (gradient checks).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "genrefuse/errors.hpp"

namespace genrefuse {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  /// Direct write access; only for initialisation and optimizer updates.
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  /// Accumulates dThis/dLeaf into every reachable leaf with requires_grad.
  /// Leaf gradients accumulate across calls; callers zero them explicitly.
  void backward() const;

  /// Same values, no history, requires_grad = false.
  Tensor detach() const;

  // Used by op implementations.
  static Tensor from_node(std::shared_ptr<detail::Node<T>> node);
  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

 private:
  const detail::Node<T>& checked() const;
  std::shared_ptr<detail::Node<T>> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

/// Element-wise precision conversion; the result carries no history.
template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& x, bool requires_grad = false) {
  const auto src = x.data();
  return Tensor<To>::from(x.shape(), std::vector<To>(src.begin(), src.end()), requires_grad);
}

}  // namespace genrefuse
