#include "genrefuse/optim.hpp"

#include <cmath>

namespace genrefuse {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

double scheduled_learning_rate(double base_lr, std::size_t epoch, std::size_t halve_every) {
  if (halve_every == 0) return base_lr;
  return base_lr * std::ldexp(1.0, -static_cast<int>(epoch / halve_every));
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig config, std::vector<Tensor<T>> params)
    : config_(config), params_(std::move(params)) {
  if (!(config_.learning_rate > 0.0)) {
    throw ConfigError("optimizer: learning rate must be positive");
  }
  state_.learning_rate = config_.learning_rate;
  for (const auto& p : params_) {
    if (!p.requires_grad()) throw ContractError("optimizer: parameter does not require grad");
    if (config_.kind == OptimizerKind::kAdam) {
      state_.first_moment.emplace_back(p.numel(), T(0));
      state_.second_moment.emplace_back(p.numel(), T(0));
    }
  }
}

template <typename T>
void Optimizer<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void Optimizer<T>::step(std::size_t epoch) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("optimizer: registered parameter #" + std::to_string(i) + " of shape " +
                          shape_str(params_[i].shape()) + " has no gradient");
    }
  }
  const double lr = scheduled_learning_rate(config_.learning_rate, epoch, config_.halve_every);
  state_.learning_rate = lr;
  ++state_.step_count;

  if (config_.kind == OptimizerKind::kSgd) {
    for (auto& p : params_) {
      auto data = p.mutable_data();
      auto grad = p.grad();
      for (std::size_t k = 0; k < data.size(); ++k) data[k] -= static_cast<T>(lr) * grad[k];
    }
    return;
  }

  const double t = static_cast<double>(state_.step_count);
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T bias1 = static_cast<T>(1.0 - std::pow(config_.beta1, t));
  const T bias2 = static_cast<T>(1.0 - std::pow(config_.beta2, t));
  const T eps = static_cast<T>(config_.epsilon);
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto data = params_[i].mutable_data();
    auto grad = params_[i].grad();
    auto& m = state_.first_moment[i];
    auto& v = state_.second_moment[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * grad[k];
      v[k] = b2 * v[k] + (T(1) - b2) * grad[k] * grad[k];
      const T mhat = m[k] / bias1;
      const T vhat = v[k] / bias2;
      data[k] -= step * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace genrefuse
