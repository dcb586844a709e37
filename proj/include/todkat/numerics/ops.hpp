#pragma once

#include <cstdint>
#include <vector>

#include "todkat/numerics/tensor.hpp"

namespace todkat {

/// Score used for masked attention positions; exp() of it underflows to exactly 0.
inline constexpr double kMaskedScore = -1e30;

// Elementwise binary ops need equal shapes. add() additionally accepts a rank-1
// right operand matching the last extent of the left operand (bias broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// Gradient is zero where x lies outside [lo, hi].
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Sum of all elements, shape [1].
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduction of a matrix along `axis`; the result is rank 1.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);

/// Concatenation along `axis` (rank 1: axis 0; rank 2: axis 0 or 1).
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Rows [begin, end) of a matrix, or elements [begin, end) of a vector.
Tensor slice(const Tensor& x, std::size_t begin, std::size_t end);
/// Columns [begin, end) of a matrix.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
/// Row `i` of a matrix as a vector.
Tensor row(const Tensor& x, std::size_t i);
/// Embedding lookup: rows of `table` [V×d] selected by `ids`, giving [n×d].
Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& ids);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

/// Sets entries where mask != 0 to `value`; no gradient flows to those entries.
Tensor masked_fill(const Tensor& x, const std::vector<std::uint8_t>& mask, double value);

/// Per-row normalization of a matrix (or a vector) followed by gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-10);

/// Mean token cross-entropy of logits [n×C] against integer targets; targets equal
/// to `ignore_index` are excluded from the mean. Throws if every target is ignored.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& targets,
                     std::int64_t ignore_index = -1);
/// Same as cross_entropy but summed instead of averaged.
Tensor cross_entropy_sum(const Tensor& logits, const std::vector<std::int64_t>& targets,
                         std::int64_t ignore_index = -1);

/// mean + exp(log_variance / 2) ⊙ noise, with `noise` a constant of the same shape.
Tensor gaussian_sample(const Tensor& mean, const Tensor& log_variance, const Tensor& noise);

/// Row r of matrix x multiplied by s[r].
Tensor scale_rows(const Tensor& x, const Tensor& s);

/// Forward value is `hard`; the gradient is routed to `soft` unchanged
/// (straight-through estimator).
Tensor straight_through(const Tensor& hard, const Tensor& soft);

}  // namespace todkat
