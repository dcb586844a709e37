#pragma once

#include <string>
#include <vector>

#include "todkat/numerics/rng.hpp"
#include "todkat/numerics/tensor.hpp"

namespace todkat {

/// Ordered collection of named trainable tensors.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  /// Registers a parameter initialised uniformly in ±sqrt(1/fan_in), with the
  /// stream derived from `rng` and the name.
  Tensor add_uniform(const std::string& name, Shape shape, std::size_t fan_in, const Rng& rng);
  Tensor add_constant(const std::string& name, Shape shape, double value);
  Tensor add(const std::string& name, Tensor tensor);

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  /// Deep copy of every parameter's values (for best-checkpoint snapshots).
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<Entry> entries_;
};

}  // namespace todkat
