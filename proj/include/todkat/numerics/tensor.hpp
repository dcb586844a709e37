#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace todkat {

using Shape = std::vector<std::size_t>;

/// Raised when operand extents do not fit an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a caller violates a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a NaN or Inf is produced while finite checks are enabled.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Finite checks run on every recorded op result. On by default in debug builds.
void set_finite_checks(bool enabled);
bool finite_checks();

class Tape;

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  Tape* tape = nullptr;  // producing tape; null for leaves and constants
  std::size_t node_id = 0;
};

/// Dense row-major float64 array. Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor vector(std::vector<double> values);
  static Tensor scalar(double value);
  /// Leaf tensor that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return values().size(); }

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  std::optional<std::size_t> node_id() const;

  /// Deep copy, not attached to any tape and not requiring grad.
  Tensor clone() const;
  /// Same values as a constant; gradient does not flow back through the result.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Append-only record of differentiable operations (define-by-run).
class Tape {
 public:
  using Backward = std::function<void()>;

  struct Node {
    const char* kind;
    std::vector<std::size_t> inputs;  // node ids of recorded inputs, leaves omitted
    std::shared_ptr<TensorImpl> output;
    Backward backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  std::size_t record(const char* kind, const std::vector<const TensorImpl*>& inputs,
                     std::shared_ptr<TensorImpl> output, Backward backward);

  /// Seeds d(loss)/d(loss) = 1 and walks the nodes in strictly decreasing order.
  void backward(const Tensor& loss);
  /// Drops all nodes so the tape can be reused.
  void reset();

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  /// Order in which the last backward() visited nodes.
  const std::vector<std::size_t>& visit_order() const { return visit_order_; }

  static Tape* active();

  /// Makes `tape` the recording target for the current thread while in scope.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_order_;
  bool consumed_ = false;
};

/// Suspends recording for the current thread while in scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

namespace detail {

/// Adds `g` into the gradient buffer of `t`, allocating it on first use.
void accumulate(TensorImpl& t, std::span<const double> g);
std::vector<double>& grad_buffer(TensorImpl& t);

/// Builds the result tensor of an op and records it when any input needs a gradient.
/// `backward` receives the output impl and is only invoked if that output received
/// a gradient.
Tensor make_result(const char* kind, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs,
                   std::function<void(const TensorImpl& out)> backward);

}  // namespace detail

}  // namespace todkat
