#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "genrefuse/rng.hpp"
#include "genrefuse/tensor.hpp"

namespace genrefuse {

/// Ordered collection of named tensors. Trainable parameters and fixed
/// buffers share the directory so both travel through checkpoints.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool trainable;
  };

  void add(std::string name, Tensor<T> tensor, bool trainable = true);
  bool contains(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor<T>> trainable() const;
  /// Trainable tensors whose name starts with any of the given prefixes.
  std::vector<Tensor<T>> trainable_with_prefix(const std::vector<std::string>& prefixes) const;
  std::size_t total_trainable_elements() const;

 private:
  std::vector<Entry> entries_;
};

/// Normal(0, stddev) initialised tensor with requires_grad set.
template <typename T>
Tensor<T> init_normal(Shape shape, double stddev, Rng& rng);

/// y = x W + b, x: m x in, W: in x out.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true);

  Tensor<T> forward(const Tensor<T>& x) const;
  void register_params(ParameterSet<T>& params, const std::string& prefix) const;

  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;  // undefined when constructed without bias
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Linear<float>;
extern template class Linear<double>;

}  // namespace genrefuse
