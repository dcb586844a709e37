#include "todkat/numerics/adam.hpp"

#include <cmath>

namespace todkat {

namespace {

void ensure_moments(std::span<Tensor> params, AdamState& s) {
  if (s.first_moment.empty()) {
    for (const auto& p : params) {
      s.first_moment.emplace_back(p.size(), 0.0);
      s.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (s.first_moment.size() != params.size()) {
    throw DimensionError("adam: state tracks " + std::to_string(s.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (s.first_moment[i].size() != params[i].size()) {
      throw DimensionError("adam: moment of size " + std::to_string(s.first_moment[i].size()) +
                           " for parameter " + shape_str(params[i].shape()));
    }
  }
}

void update_one(Tensor& p, std::span<const double> g, std::vector<double>& m, std::vector<double>& v,
                const AdamState& s, double bc1, double bc2) {
  auto w = p.mutable_values();
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double gj = g.empty() ? 0.0 : g[j];
    m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * gj;
    v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * gj * gj;
    const double mhat = m[j] / bc1;
    const double vhat = v[j] / bc2;
    w[j] -= s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
  }
}

}  // namespace

void adam_step(std::span<Tensor> params, AdamState& state) {
  ensure_moments(params, state);
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    update_one(params[i], params[i].grad(), state.first_moment[i], state.second_moment[i], state, bc1,
               bc2);
  }
}

void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state) {
  if (grads.size() != params.size()) {
    throw DimensionError("adam: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size()) {
      throw DimensionError("adam: gradient of size " + std::to_string(grads[i].size()) +
                           " for parameter " + shape_str(params[i].shape()));
    }
  }
  ensure_moments(params, state);
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    update_one(params[i], grads[i], state.first_moment[i], state.second_moment[i], state, bc1, bc2);
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.mutable_grad()) g *= f;
    }
  }
  return norm;
}

}  // namespace todkat
