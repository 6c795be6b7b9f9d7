#include "genrefuse/nn.hpp"

#include <algorithm>
#include <cmath>

#include "genrefuse/ops.hpp"

namespace genrefuse {

template <typename T>
void ParameterSet<T>::add(std::string name, Tensor<T> tensor, bool trainable) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(tensor), trainable});
}

template <typename T>
bool ParameterSet<T>::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

template <typename T>
Tensor<T>& ParameterSet<T>::at(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw ConfigError("no parameter named '" + name + "'");
}

template <typename T>
const Tensor<T>& ParameterSet<T>::at(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw ConfigError("no parameter named '" + name + "'");
}

template <typename T>
std::vector<Tensor<T>> ParameterSet<T>::trainable() const {
  std::vector<Tensor<T>> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

template <typename T>
std::vector<Tensor<T>> ParameterSet<T>::trainable_with_prefix(
    const std::vector<std::string>& prefixes) const {
  std::vector<Tensor<T>> out;
  for (const auto& e : entries_) {
    if (!e.trainable) continue;
    for (const auto& p : prefixes) {
      if (e.name.starts_with(p)) {
        out.push_back(e.tensor);
        break;
      }
    }
  }
  return out;
}

template <typename T>
std::size_t ParameterSet<T>::total_trainable_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.tensor.numel();
  return n;
}

template <typename T>
Tensor<T> init_normal(Shape shape, double stddev, Rng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(stddev * rng.normal());
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, Rng& rng, bool bias)
    : weight_(init_normal<T>({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)) {
  if (bias) bias_ = Tensor<T>::zeros({out}, true);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  auto y = ops::matmul(x, weight_);
  return bias_.defined() ? ops::add_row_bias(y, bias_) : y;
}

template <typename T>
void Linear<T>::register_params(ParameterSet<T>& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight_);
  if (bias_.defined()) params.add(prefix + ".bias", bias_);
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Linear<float>;
template class Linear<double>;
template Tensor<float> init_normal<float>(Shape, double, Rng&);
template Tensor<double> init_normal<double>(Shape, double, Rng&);

}  // namespace genrefuse
