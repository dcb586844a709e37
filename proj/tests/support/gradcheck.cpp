#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "todkat/numerics/rng.hpp"

namespace todkat::testsupport {

std::vector<double> analytic_grad(std::vector<Tensor>& params, const std::function<Tensor()>& loss_fn) {
  for (auto& p : params) p.zero_grad();
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<double> flat;
  for (auto& p : params) {
    if (p.has_grad()) {
      flat.insert(flat.end(), p.grad().begin(), p.grad().end());
    } else {
      flat.insert(flat.end(), p.size(), 0.0);
    }
  }
  return flat;
}

double numeric_partial(Tensor& param, std::size_t index, const std::function<Tensor()>& loss_fn, double h) {
  NoGradGuard guard;
  auto v = param.mutable_values();
  const double orig = v[index];
  v[index] = orig + h;
  const double fp = loss_fn().item();
  v[index] = orig - h;
  const double fm = loss_fn().item();
  v[index] = orig;
  return (fp - fm) / (2 * h);
}

GradCheckResult gradcheck(std::vector<Tensor> params, const std::function<Tensor()>& loss_fn, double h) {
  const auto analytic = analytic_grad(params, loss_fn);
  GradCheckResult res;
  std::size_t off = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < params[pi].size(); ++i) {
      const double num = numeric_partial(params[pi], i, loss_fn, h);
      const double an = analytic[off + i];
      diff2 += (an - num) * (an - num);
      a2 += an * an;
      n2 += num * num;
    }
    off += params[pi].size();
    const double rel = std::sqrt(diff2) / std::max(std::sqrt(a2) + std::sqrt(n2), 1e-12);
    if (rel > res.max_relative_error) {
      res.max_relative_error = rel;
      res.worst_param = pi;
    }
  }
  return res;
}

double gradcheck_sampled(std::vector<Tensor> params, const std::function<Tensor()>& loss_fn,
                         std::size_t count, std::uint64_t seed, double h) {
  const auto analytic = analytic_grad(params, loss_fn);
  std::size_t total = 0;
  for (auto& p : params) total += p.size();
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    std::size_t flat = rng.below(total);
    std::size_t pi = 0;
    std::size_t idx = flat;
    while (idx >= params[pi].size()) idx -= params[pi++].size();
    const double num = numeric_partial(params[pi], idx, loss_fn, h);
    const double an = analytic[flat];
    const double rel = std::abs(an - num) / std::max(std::abs(an) + std::abs(num), 1e-8);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace todkat::testsupport
