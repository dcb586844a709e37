#include "todkat/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace todkat {

namespace {

#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif

thread_local Tape* t_active_tape = nullptr;

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks() { return g_finite_checks; }

// ---------------------------------------------------------------------------
// Tensor

namespace {

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<double> values) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " cannot hold " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
  const auto n = shape_numel(shape);
  return Tensor(new_impl(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(new_impl(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return Tensor(new_impl(std::move(shape), std::move(values)));
}

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(new_impl(std::move(s), std::move(values)));
}

Tensor Tensor::scalar(double value) { return Tensor(new_impl({1}, {value})); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  auto impl = new_impl(std::move(shape), std::move(values));
  impl->requires_grad = true;
  return Tensor(std::move(impl));
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::span<const double> Tensor::values() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->values;
}

std::span<double> Tensor::mutable_values() {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->values;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->values[0];
}

double Tensor::at(std::size_t i) const { return values()[i]; }

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a matrix, got " + shape_str(shape()));
  return impl_->values[row * impl_->shape[1] + col];
}

std::span<const double> Tensor::grad() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return detail::grad_buffer(*impl_);
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

std::optional<std::size_t> Tensor::node_id() const {
  if (!impl_ || !impl_->tape) return std::nullopt;
  return impl_->node_id;
}

Tensor Tensor::clone() const { return Tensor::from(shape(), std::vector<double>(values().begin(), values().end())); }

Tensor Tensor::detach() const { return clone(); }

// ---------------------------------------------------------------------------
// Tape

Tape::~Tape() {
  for (auto& n : nodes_) {
    if (n.output && n.output->tape == this) n.output->tape = nullptr;
  }
}

std::size_t Tape::record(const char* kind, const std::vector<const TensorImpl*>& inputs,
                         std::shared_ptr<TensorImpl> output, Backward backward) {
  if (consumed_) throw ContractError("recording onto a consumed tape; call reset() first");
  Node node;
  node.kind = kind;
  for (const auto* in : inputs) {
    if (in->tape == this) node.inputs.push_back(in->node_id);
  }
  const auto id = nodes_.size();
  output->tape = this;
  output->node_id = id;
  node.output = std::move(output);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return id;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward called twice on the same tape without reset()");
  if (loss.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  auto* impl = loss.impl();
  if (impl->tape != this) throw ContractError("loss was not recorded on this tape");
  auto& g = detail::grad_buffer(*impl);
  g[0] += 1.0;
  visit_order_.clear();
  for (std::size_t i = impl->node_id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.output->grad.empty()) continue;
    visit_order_.push_back(i);
    node.backward();
  }
  consumed_ = true;
}

void Tape::reset() {
  for (auto& n : nodes_) {
    if (n.output && n.output->tape == this) n.output->tape = nullptr;
  }
  nodes_.clear();
  visit_order_.clear();
  consumed_ = false;
}

Tape* Tape::active() { return t_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
Tape::Scope::~Scope() { t_active_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(t_active_tape) { t_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { t_active_tape = previous_; }

// ---------------------------------------------------------------------------

namespace detail {

std::vector<double>& grad_buffer(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
  return t.grad;
}

void accumulate(TensorImpl& t, std::span<const double> g) {
  auto& buf = grad_buffer(t);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

Tensor make_result(const char* kind, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs,
                   std::function<void(const TensorImpl& out)> backward) {
  auto impl = new_impl(std::move(shape), std::move(values));
  if (g_finite_checks) {
    for (double v : impl->values) {
      if (!std::isfinite(v)) {
        throw NumericError(std::string("non-finite value produced by ") + kind + " " +
                           shape_str(impl->shape));
      }
    }
  }
  Tape* tape = t_active_tape;
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  if (!tape || !needs_grad) return Tensor(std::move(impl));

  std::vector<const TensorImpl*> raw;
  raw.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.impl()->tape && in.impl()->tape != tape) {
      throw ContractError(std::string(kind) + ": input recorded on a different tape");
    }
    raw.push_back(in.impl());
  }
  impl->requires_grad = true;
  TensorImpl* out = impl.get();
  tape->record(kind, raw, impl, [out, fn = std::move(backward)] { fn(*out); });
  return Tensor(std::move(impl));
}

}  // namespace detail

}  // namespace todkat
