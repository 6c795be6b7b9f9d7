#pragma once

// Differentiable operations over Tensor<T>. Every op checks operand shapes
// (DimensionError), verifies its output is finite (NumericError) and, when
// any input requires grad and grad mode is enabled, records a backward
// closure.

#include <cstddef>
#include <vector>

#include "genrefuse/tensor.hpp"

namespace genrefuse::ops {

// Elementwise, identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

/// a * c for a constant c.
template <typename T> Tensor<T> scale(const Tensor<T>& a, double c);
/// a * s where s is a one-element tensor (gradient flows into s).
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, const Tensor<T>& s);
/// a / s where s is a one-element tensor.
template <typename T> Tensor<T> div_scalar(const Tensor<T>& a, const Tensor<T>& s);

/// x[m×n] + b[n] broadcast over rows.
template <typename T> Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& b);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
/// Clamp into [lo, hi]; gradient passes only where lo < x < hi.
template <typename T> Tensor<T> clamp(const Tensor<T>& x, double lo, double hi);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);

/// Sum / mean of every element, producing a scalar of shape {1}.
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// Rank-2 reductions keeping the reduced axis as size 1
/// (axis 0: m×n -> 1×n, axis 1: m×n -> m×1).
template <typename T> Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis);
template <typename T> Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis);

/// Rank-2 concatenation along axis 0 (rows) or 1 (columns).
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
/// Columns [begin, end) of a rank-2 tensor.
template <typename T> Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end);
/// Same data, new shape of equal element count.
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Diagonal of a square m×m matrix as a 1×m row.
template <typename T> Tensor<T> diagonal(const Tensor<T>& x);

/// Row-wise softmax using max subtraction.
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& x);
/// Row-wise log-softmax via log-sum-exp.
template <typename T> Tensor<T> log_softmax_rows(const Tensor<T>& x);
/// Divide each row by its L2 norm (norm floored at eps).
template <typename T> Tensor<T> l2_normalize_rows(const Tensor<T>& x, double eps = 1e-12);

/// 3×3 convolution, stride 1, zero "same" padding.
/// x: [C_in, H, W], weight: [C_out, C_in, 3, 3], bias: [C_out] -> [C_out, H, W].
template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
/// 2×2 max-pool, stride 2, ceil mode: [C, H, W] -> [C, ceil(H/2), ceil(W/2)].
template <typename T> Tensor<T> maxpool2x2(const Tensor<T>& x);
/// Mean over the frequency (H) axis, transposed to a time sequence:
/// [C, H, W] -> [W, C].
template <typename T> Tensor<T> freq_mean_sequence(const Tensor<T>& x);

/// Mean over all entries of max(x,0) - x*y + log(1+exp(-|x|)).
/// targets must hold only 0/1 and match logits' shape.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets);

}  // namespace genrefuse::ops
