#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "todkat/numerics/tensor.hpp"

namespace todkat {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update using the gradients stored on `params`.
/// Parameters without a gradient buffer are treated as having a zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

/// Same update with explicit gradients; grads[i] must match params[i] in size.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state);

/// Rescales all gradients so that their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace todkat
