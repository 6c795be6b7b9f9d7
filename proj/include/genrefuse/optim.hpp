#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "genrefuse/tensor.hpp"

namespace genrefuse {

enum class OptimizerKind { kAdam, kSgd };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-4;
  // Learning rate halves every `halve_every` epochs; 0 disables decay.
  std::size_t halve_every = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// base_lr * 0.5^floor(epoch / halve_every).
double scheduled_learning_rate(double base_lr, std::size_t epoch, std::size_t halve_every);

template <typename T>
struct OptimizerState {
  double learning_rate = 1e-4;
  std::size_t step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

/// Adam or plain SGD over a fixed list of parameters. Every registered
/// parameter must carry a gradient when step() is called.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<Tensor<T>> params);

  void step(std::size_t epoch);
  void zero_grad();

  const OptimizerState<T>& state() const { return state_; }
  const OptimizerConfig& config() const { return config_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor<T>> params_;
  OptimizerState<T> state_;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace genrefuse
