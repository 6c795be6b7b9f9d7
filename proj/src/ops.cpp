#include "genrefuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>
#include <type_traits>

namespace genrefuse::ops {

namespace {

template <typename T>
using NodeT = detail::Node<T>;

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_str(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
void require_scalar(const Tensor<T>& s, const char* op) {
  if (s.numel() != 1) {
    throw DimensionError(std::string(op) + ": expected one-element tensor, got " +
                         shape_str(s.shape()));
  }
}

// Builds the output node; attaches history only when some input needs grad.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(NodeT<T>&)> backward_fn) {
  for (const T v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in output of shape " +
                         shape_str(shape));
    }
  }
  auto node = std::make_shared<NodeT<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool tracked = false;
  if (NoGradGuard::grad_enabled()) {
    for (const auto* in : inputs) tracked = tracked || in->requires_grad();
  }
  if (tracked) {
    node->requires_grad = true;
    for (const auto* in : inputs) node->parents.push_back(in->node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>::from_node(std::move(node));
}

// Wider accumulator so float reductions are insensitive to summation order.
template <typename T>
using Accum = std::conditional_t<std::is_same_v<T, float>, double, long double>;

template <typename T>
NodeT<T>* grad_target(NodeT<T>& self, std::size_t i) {
  auto* p = self.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

// c[m×n] (+)= a[m×k] · b[k×n]
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(std::span<const T> x, std::size_t rows, std::size_t cols) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return make_result<T>("add", a.shape(), std::move(out), {&a, &b}, [](NodeT<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* p = grad_target(self, k)) {
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return make_result<T>("sub", a.shape(), std::move(out), {&a, &b}, [](NodeT<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (auto* p = grad_target(self, 1)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result<T>("mul", a.shape(), std::move(out), {&a, &b}, [](NodeT<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double c) {
  const T k = static_cast<T>(c);
  std::vector<T> out(a.numel());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * k;
  return make_result<T>("scale", a.shape(), std::move(out), {&a}, [k](NodeT<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * k;
    }
  });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, const Tensor<T>& s) {
  require_scalar(s, "mul_scalar");
  const T k = s.item();
  std::vector<T> out(a.numel());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * k;
  return make_result<T>("mul_scalar", a.shape(), std::move(out), {&a, &s}, [](NodeT<T>& self) {
    auto& pa = *self.parents[0];
    auto& ps = *self.parents[1];
    const T k = ps.data[0];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * k;
    }
    if (ps.requires_grad) {
      T acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa.data[i];
      ps.ensure_grad()[0] += acc;
    }
  });
}

template <typename T>
Tensor<T> div_scalar(const Tensor<T>& a, const Tensor<T>& s) {
  require_scalar(s, "div_scalar");
  const T k = s.item();
  if (k == T(0)) throw NumericError("div_scalar: division by zero");
  std::vector<T> out(a.numel());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] / k;
  return make_result<T>("div_scalar", a.shape(), std::move(out), {&a, &s}, [](NodeT<T>& self) {
    auto& pa = *self.parents[0];
    auto& ps = *self.parents[1];
    const T k = ps.data[0];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / k;
    }
    if (ps.requires_grad) {
      T acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa.data[i];
      ps.ensure_grad()[0] -= acc / (k * k);
    }
  });
}

template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& b) {
  require_rank(x, 2, "add_row_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (b.numel() != n) {
    throw DimensionError("add_row_bias: bias " + shape_str(b.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  std::vector<T> out(x.numel());
  auto xd = x.data(), bd = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] + bd[j];
  return make_result<T>("add_row_bias", x.shape(), std::move(out), {&x, &b},
                        [m, n](NodeT<T>& self) {
                          if (auto* p = grad_target(self, 0)) {
                            auto& g = p->ensure_grad();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                          }
                          if (auto* p = grad_target(self, 1)) {
                            auto& g = p->ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                          }
                        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > T(0) ? xd[i] : T(0);
  return make_result<T>("relu", x.shape(), std::move(out), {&x}, [](NodeT<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (p->data[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xd[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  return make_result<T>("sigmoid", x.shape(), std::move(out), {&x}, [](NodeT<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T s = self.data[i];
        g[i] += self.grad[i] * s * (T(1) - s);
      }
    }
  });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xd[i]);
  return make_result<T>("exp", x.shape(), std::move(out), {&x}, [](NodeT<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.data[i];
    }
  });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, double lo, double hi) {
  if (!(lo <= hi)) throw ConfigError("clamp: lo must not exceed hi");
  const T l = static_cast<T>(lo), h = static_cast<T>(hi);
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(xd[i], l, h);
  return make_result<T>("clamp", x.shape(), std::move(out), {&x}, [l, h](NodeT<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (p->data[i] > l && p->data[i] < h) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result<T>("matmul", {m, n}, std::move(out), {&a, &b}, [m, k, n](NodeT<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      // dA = dC · Bᵀ
      const auto bt = transposed<T>(pb.data, k, n);
      gemm_acc(self.grad.data(), bt.data(), pa.ensure_grad().data(), m, n, k);
    }
    if (pb.requires_grad) {
      // dB = Aᵀ · dC
      const auto at = transposed<T>(pa.data, m, k);
      gemm_acc(at.data(), self.grad.data(), pb.ensure_grad().data(), k, m, n);
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  return make_result<T>("transpose", {n, m}, transposed<T>(a.data(), m, n), {&a},
                        [m, n](NodeT<T>& self) {
                          if (auto* p = grad_target(self, 0)) {
                            auto& g = p->ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j)
                                g[i * n + j] += self.grad[j * m + i];
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Accum<T> acc = 0;
  for (const T v : x.data()) acc += v;
  return make_result<T>("sum", {1}, {static_cast<T>(acc)}, {&x}, [](NodeT<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->ensure_grad();
      for (auto& v : g) v += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const std::size_t n = x.numel();
  if (n == 0) throw DimensionError("mean: empty tensor");
  Accum<T> acc = 0;
  for (const T v : x.data()) acc += v;
  return make_result<T>("mean", {1}, {static_cast<T>(acc / static_cast<Accum<T>>(n))}, {&x}, [n](NodeT<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->ensure_grad();
      const T d = self.grad[0] / static_cast<T>(n);
      for (auto& v : g) v += d;
    }
  });
}

namespace {

template <typename T>
Tensor<T> reduce_axis(const Tensor<T>& x, std::size_t axis, bool average, const char* op) {
  require_rank(x, 2, op);
  if (axis > 1) throw DimensionError(std::string(op) + ": axis must be 0 or 1");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const std::size_t count = axis == 0 ? m : n;
  if (count == 0) throw DimensionError(std::string(op) + ": reducing an empty axis");
  const T factor = average ? T(1) / static_cast<T>(count) : T(1);
  auto xd = x.data();
  Shape out_shape = axis == 0 ? Shape{1, n} : Shape{m, 1};
  std::vector<Accum<T>> acc(axis == 0 ? n : m, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) acc[axis == 0 ? j : i] += xd[i * n + j];
  std::vector<T> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out[i] = static_cast<T>(average ? acc[i] / static_cast<Accum<T>>(count) : acc[i]);
  }
  return make_result<T>(op, std::move(out_shape), std::move(out), {&x},
                        [m, n, axis, factor](NodeT<T>& self) {
                          if (auto* p = grad_target(self, 0)) {
                            auto& g = p->ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j)
                                g[i * n + j] += self.grad[axis == 0 ? j : i] * factor;
                          }
                        });
}

}  // namespace

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis) {
  return reduce_axis(x, axis, false, "sum_axis");
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis) {
  return reduce_axis(x, axis, true, "mean_axis");
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank(p, 2, "concat");
  const std::size_t fixed = parts[0].dim(1 - axis);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(1 - axis) != fixed) {
      throw DimensionError("concat: incompatible shapes " + shape_str(parts[0].shape()) +
                           " and " + shape_str(p.shape()));
    }
    total += p.dim(axis);
  }
  const Shape out_shape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<T> out(total * fixed);
  // (row offset or column offset) for each part
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    auto pd = p.data();
    const std::size_t r = p.dim(0), c = p.dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        if (axis == 0) out[(off + i) * fixed + j] = pd[i * c + j];
        else out[i * total + off + j] = pd[i * c + j];
      }
    off += p.dim(axis);
  }

  auto node = make_result<T>("concat", out_shape, std::move(out), {}, nullptr).node();
  bool tracked = false;
  if (NoGradGuard::grad_enabled()) {
    for (const auto& p : parts) tracked = tracked || p.requires_grad();
  }
  if (tracked) {
    node->requires_grad = true;
    for (const auto& p : parts) node->parents.push_back(p.node());
    node->backward_fn = [offsets, axis, total](NodeT<T>& self) {
      const std::size_t width = self.shape[1];
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        auto* p = grad_target(self, k);
        if (!p) continue;
        auto& g = p->ensure_grad();
        const std::size_t r = p->shape[0], c = p->shape[1];
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            g[i * c + j] += axis == 0 ? self.grad[(offsets[k] + i) * width + j]
                                      : self.grad[i * total + offsets[k] + j];
          }
      }
    };
  }
  return Tensor<T>::from_node(node);
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<T> out(m * w);
  auto xd = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xd[i * n + begin + j];
  return make_result<T>("slice_cols", {m, w}, std::move(out), {&x},
                        [m, n, w, begin](NodeT<T>& self) {
                          if (auto* p = grad_target(self, 0)) {
                            auto& g = p->ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < w; ++j)
                                g[i * n + begin + j] += self.grad[i * w + j];
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {&x}, [](NodeT<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> diagonal(const Tensor<T>& x) {
  require_rank(x, 2, "diagonal");
  const std::size_t m = x.dim(0);
  if (x.dim(1) != m) throw DimensionError("diagonal: matrix " + shape_str(x.shape()) + " not square");
  std::vector<T> out(m);
  auto xd = x.data();
  for (std::size_t i = 0; i < m; ++i) out[i] = xd[i * m + i];
  return make_result<T>("diagonal", {1, m}, std::move(out), {&x}, [m](NodeT<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) g[i * m + i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  auto xd = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xd.data() + i * n;
    T* o = out.data() + i * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(row[j])) throw NumericError("softmax_rows: NaN input");
      mx = std::max(mx, row[j]);
    }
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return make_result<T>("softmax_rows", x.shape(), std::move(out), {&x}, [m, n](NodeT<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const T* s = self.data.data() + i * n;
        const T* go = self.grad.data() + i * n;
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += go[j] * s[j];
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += s[j] * (go[j] - dot);
      }
    }
  });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x) {
  require_rank(x, 2, "log_softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  auto xd = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xd.data() + i * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(row[j])) throw NumericError("log_softmax_rows: NaN input");
      mx = std::max(mx, row[j]);
    }
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return make_result<T>("log_softmax_rows", x.shape(), std::move(out), {&x},
                        [m, n](NodeT<T>& self) {
                          if (auto* p = grad_target(self, 0)) {
                            auto& g = p->ensure_grad();
                            for (std::size_t i = 0; i < m; ++i) {
                              const T* y = self.data.data() + i * n;
                              const T* go = self.grad.data() + i * n;
                              T total = 0;
                              for (std::size_t j = 0; j < n; ++j) total += go[j];
                              for (std::size_t j = 0; j < n; ++j)
                                g[i * n + j] += go[j] - std::exp(y[j]) * total;
                            }
                          }
                        });
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, double eps) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  auto xd = x.data();
  std::vector<T> out(x.numel());
  std::vector<T> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    T ss = 0;
    for (std::size_t j = 0; j < n; ++j) ss += xd[i * n + j] * xd[i * n + j];
    norms[i] = std::max(std::sqrt(ss), static_cast<T>(eps));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xd[i * n + j] / norms[i];
  }
  const T floor = static_cast<T>(eps);
  return make_result<T>(
      "l2_normalize_rows", x.shape(), std::move(out), {&x},
      [m, n, norms = std::move(norms), floor](NodeT<T>& self) {
        if (auto* p = grad_target(self, 0)) {
          auto& g = p->ensure_grad();
          for (std::size_t i = 0; i < m; ++i) {
            const T* y = self.data.data() + i * n;
            const T* go = self.grad.data() + i * n;
            if (norms[i] <= floor) {
              for (std::size_t j = 0; j < n; ++j) g[i * n + j] += go[j] / norms[i];
              continue;
            }
            T dot = 0;
            for (std::size_t j = 0; j < n; ++j) dot += y[j] * go[j];
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += (go[j] - y[j] * dot) / norms[i];
          }
        }
      });
}

template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x, 3, "conv2d_3x3");
  require_rank(weight, 4, "conv2d_3x3");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = weight.dim(0);
  if (weight.dim(1) != cin || weight.dim(2) != 3 || weight.dim(3) != 3 || bias.numel() != cout) {
    throw DimensionError("conv2d_3x3: input " + shape_str(x.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()) +
                         " are incompatible");
  }
  const std::size_t plane = h * w, taps = cin * 9;

  // Row (c, ky, kx) of the column matrix holds input (y+ky-1, xx+kx-1) for every
  // output pixel, zero outside the image. Forward is then W[cout, taps] · col.
  auto for_each_row = [h, w](std::size_t ky, std::size_t kx, auto&& body) {
    const std::size_t y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? (h > 0 ? h - 1 : 0) : h;
    const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? (w > 0 ? w - 1 : 0) : w;
    if (x0 >= x1) return;
    for (std::size_t y = y0; y < y1; ++y) body(y * w, (y + ky - 1) * w + kx - 1, x0, x1);
  };
  std::vector<T> col(taps * plane, T(0));
  const T* xd = x.data().data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t t = 0; t < 9; ++t) {
      T* row = col.data() + (c * 9 + t) * plane;
      const T* ip = xd + c * plane;
      for_each_row(t / 3, t % 3, [&](std::size_t orow, std::size_t irow, std::size_t x0, std::size_t x1) {
        std::copy(ip + irow + x0, ip + irow + x1, row + orow + x0);
      });
    }
  }
  std::vector<T> out(cout * plane);
  for (std::size_t o = 0; o < cout; ++o) std::fill(out.begin() + o * plane, out.begin() + (o + 1) * plane, bias.data()[o]);
  gemm_acc(weight.data().data(), col.data(), out.data(), cout, taps, plane);

  return make_result<T>(
      "conv2d_3x3", {cout, h, w}, std::move(out), {&x, &weight, &bias},
      [cin, cout, plane, taps, col = std::move(col), for_each_row](NodeT<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        const T* go = self.grad.data();
        if (pb.requires_grad) {
          auto& gb = pb.ensure_grad();
          for (std::size_t o = 0; o < cout; ++o) {
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += go[o * plane + i];
            gb[o] += acc;
          }
        }
        if (pw.requires_grad) {
          // dW = dOut · colᵀ
          const auto colt = transposed<T>(col, taps, plane);
          gemm_acc(go, colt.data(), pw.ensure_grad().data(), cout, plane, taps);
        }
        if (px.requires_grad) {
          // dcol = Wᵀ · dOut, scattered back onto the input planes
          const auto wt = transposed<T>(pw.data, cout, taps);
          std::vector<T> dcol(taps * plane, T(0));
          gemm_acc(wt.data(), go, dcol.data(), taps, cout, plane);
          auto& gx = px.ensure_grad();
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t t = 0; t < 9; ++t) {
              const T* row = dcol.data() + (c * 9 + t) * plane;
              T* gp = gx.data() + c * plane;
              for_each_row(t / 3, t % 3, [&](std::size_t orow, std::size_t irow, std::size_t x0, std::size_t x1) {
                for (std::size_t xx = x0; xx < x1; ++xx) gp[irow + xx] += row[orow + xx];
              });
            }
          }
        }
      });
}

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x) {
  require_rank(x, 3, "maxpool2x2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  auto xd = x.data();
  std::vector<T> out(c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        std::size_t best = ch * h * w + (2 * y) * w + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t iy = 2 * y + dy, ix = 2 * xx + dx;
            if (iy >= h || ix >= w) continue;
            const std::size_t idx = ch * h * w + iy * w + ix;
            if (xd[idx] > xd[best]) best = idx;
          }
        }
        const std::size_t o = (ch * oh + y) * ow + xx;
        out[o] = xd[best];
        argmax[o] = best;
      }
    }
  }
  return make_result<T>("maxpool2x2", {c, oh, ow}, std::move(out), {&x},
                        [argmax = std::move(argmax)](NodeT<T>& self) {
                          if (auto* p = grad_target(self, 0)) {
                            auto& g = p->ensure_grad();
                            for (std::size_t i = 0; i < argmax.size(); ++i)
                              g[argmax[i]] += self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> freq_mean_sequence(const Tensor<T>& x) {
  require_rank(x, 3, "freq_mean_sequence");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h == 0) throw DimensionError("freq_mean_sequence: empty frequency axis");
  const T inv = T(1) / static_cast<T>(h);
  auto xd = x.data();
  std::vector<T> out(w * c, T(0));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t t = 0; t < w; ++t) out[t * c + ch] += xd[(ch * h + y) * w + t];
  for (auto& v : out) v *= inv;
  return make_result<T>("freq_mean_sequence", {w, c}, std::move(out), {&x},
                        [c, h, w, inv](NodeT<T>& self) {
                          if (auto* p = grad_target(self, 0)) {
                            auto& g = p->ensure_grad();
                            for (std::size_t ch = 0; ch < c; ++ch)
                              for (std::size_t y = 0; y < h; ++y)
                                for (std::size_t t = 0; t < w; ++t)
                                  g[(ch * h + y) * w + t] += self.grad[t * c + ch] * inv;
                          }
                        });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  require_same_shape(logits, targets, "bce_with_logits");
  const std::size_t n = logits.numel();
  if (n == 0) throw DimensionError("bce_with_logits: empty input");
  auto xd = logits.data(), yd = targets.data();
  Accum<T> acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (yd[i] != T(0) && yd[i] != T(1)) {
      throw InputError("bce_with_logits: target " + std::to_string(yd[i]) + " at index " +
                       std::to_string(i) + " is not 0 or 1");
    }
    const T x = xd[i];
    acc += std::max(x, T(0)) - x * yd[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return make_result<T>("bce_with_logits", {1}, {static_cast<T>(acc / static_cast<Accum<T>>(n))}, {&logits, &targets},
                        [n](NodeT<T>& self) {
                          auto& px = *self.parents[0];
                          auto& py = *self.parents[1];
                          if (!px.requires_grad) return;
                          auto& g = px.ensure_grad();
                          const T scale = self.grad[0] / static_cast<T>(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            const T x = px.data[i];
                            const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                                                  : std::exp(x) / (T(1) + std::exp(x));
                            g[i] += (s - py.data[i]) * scale;
                          }
                        });
}

#define GENREFUSE_INSTANTIATE_OPS(T)                                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> scale(const Tensor<T>&, double);                                    \
  template Tensor<T> mul_scalar(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> div_scalar(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> add_row_bias(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> relu(const Tensor<T>&);                                             \
  template Tensor<T> sigmoid(const Tensor<T>&);                                          \
  template Tensor<T> exp(const Tensor<T>&);                                              \
  template Tensor<T> clamp(const Tensor<T>&, double, double);                            \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> transpose(const Tensor<T>&);                                        \
  template Tensor<T> sum(const Tensor<T>&);                                              \
  template Tensor<T> mean(const Tensor<T>&);                                             \
  template Tensor<T> sum_axis(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> mean_axis(const Tensor<T>&, std::size_t);                           \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                 \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);             \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                   \
  template Tensor<T> diagonal(const Tensor<T>&);                                         \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                     \
  template Tensor<T> log_softmax_rows(const Tensor<T>&);                                 \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&, double);                        \
  template Tensor<T> conv2d_3x3(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> maxpool2x2(const Tensor<T>&);                                       \
  template Tensor<T> freq_mean_sequence(const Tensor<T>&);                               \
  template Tensor<T> bce_with_logits(const Tensor<T>&, const Tensor<T>&);

GENREFUSE_INSTANTIATE_OPS(float)
GENREFUSE_INSTANTIATE_OPS(double)

#undef GENREFUSE_INSTANTIATE_OPS

}  // namespace genrefuse::ops
