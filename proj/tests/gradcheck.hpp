#pragma once

// Central finite-difference oracle for reverse-mode gradients (f64 only).

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "genrefuse/ops.hpp"
#include "genrefuse/rng.hpp"
#include "genrefuse/tensor.hpp"

namespace genrefuse::testing {

using TensorD = Tensor<double>;

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Largest relative error between backward() and central differences of
/// `loss` over every element of every tensor in `inputs`. `loss` must rebuild
/// the graph from the current input values on each call.
inline double max_gradient_error(std::vector<TensorD>& inputs,
                                 const std::function<TensorD()>& loss, double h = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = loss().item();
      data[i] = saved - h;
      const double down = loss().item();
      data[i] = saved;
      worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

inline TensorD random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0,
                             bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TensorD::from(std::move(shape), std::move(v), requires_grad);
}

/// Fixed random weights so a vector-valued output reduces to a generic scalar.
inline TensorD weighted_sum(const TensorD& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return ops::sum(ops::mul(y, TensorD::from(y.shape(), std::move(w))));
}

}  // namespace genrefuse::testing
