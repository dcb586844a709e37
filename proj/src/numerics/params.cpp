#include "todkat/numerics/params.hpp"

#include <cmath>

namespace todkat {

Tensor ParameterStore::add(const std::string& name, Tensor tensor) {
  if (contains(name)) throw ContractError("duplicate parameter name " + name);
  auto values = std::vector<double>(tensor.values().begin(), tensor.values().end());
  auto p = Tensor::parameter(tensor.shape(), std::move(values));
  entries_.push_back({name, p});
  return p;
}

Tensor ParameterStore::add_uniform(const std::string& name, Shape shape, std::size_t fan_in,
                                   const Rng& rng) {
  Rng stream = rng.split(name);
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = (2.0 * stream.uniform() - 1.0) * bound;
  return add(name, Tensor::from(std::move(shape), std::move(v)));
}

Tensor ParameterStore::add_constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value));
}

const Tensor& ParameterStore::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ContractError("unknown parameter " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::vector<Tensor> ParameterStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<std::vector<double>> ParameterStore::snapshot() const {
  std::vector<std::vector<double>> out;
  for (const auto& e : entries_) out.emplace_back(e.tensor.values().begin(), e.tensor.values().end());
  return out;
}

void ParameterStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) throw ContractError("snapshot does not match store");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].tensor.mutable_values();
    if (dst.size() != values[i].size()) throw DimensionError("snapshot size mismatch for " + entries_[i].name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace todkat
