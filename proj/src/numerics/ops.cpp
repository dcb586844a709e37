#include "todkat/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "todkat/numerics/kernels.hpp"

namespace todkat {

using detail::accumulate;
using detail::grad_buffer;
using detail::make_result;
using Impl = std::shared_ptr<TensorImpl>;

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
  }
}

std::vector<double> copy_values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Rows and columns of a rank-1 or rank-2 tensor viewed as a matrix.
std::pair<std::size_t, std::size_t> as_matrix(const Tensor& t) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw DimensionError("expected a vector or matrix, got " + shape_str(t.shape()));
}

template <class Fwd, class Deriv>
Tensor unary(const char* kind, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  Impl xi = x.shared();
  return make_result(kind, x.shape(), std::move(out), {x}, [xi, deriv](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    auto& g = grad_buffer(*xi);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * deriv(xi->values[i], o.values[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Impl ai = a.shared(), bi = b.shared();
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return make_result("add", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
      if (ai->requires_grad) accumulate(*ai, o.grad);
      if (bi->requires_grad) accumulate(*bi, o.grad);
    });
  }
  if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0)) {
    const std::size_t n = b.dim(0);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i % n];
    return make_result("add_bias", a.shape(), std::move(out), {a, b},
                       [ai, bi, n](const TensorImpl& o) {
                         if (ai->requires_grad) accumulate(*ai, o.grad);
                         if (bi->requires_grad) {
                           auto& g = grad_buffer(*bi);
                           for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % n] += o.grad[i];
                         }
                       });
  }
  throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  Impl ai = a.shared(), bi = b.shared();
  return make_result("sub", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) accumulate(*ai, o.grad);
    if (bi->requires_grad) {
      auto& g = grad_buffer(*bi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  Impl ai = a.shared(), bi = b.shared();
  return make_result("mul", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) {
      auto& g = grad_buffer(*ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bi->values[i];
    }
    if (bi->requires_grad) {
      auto& g = grad_buffer(*bi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ai->values[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] / b.values()[i];
  Impl ai = a.shared(), bi = b.shared();
  return make_result("div", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) {
      auto& g = grad_buffer(*ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / bi->values[i];
    }
    if (bi->requires_grad) {
      auto& g = grad_buffer(*bi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i] * o.values[i] / bi->values[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return x * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary("add_scalar", a, [value](double x) { return x + value; },
               [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x,
               [](double v) {
                 if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
                 const double e = std::exp(v);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0)) throw ContractError("log of a non-positive value");
  }
  return unary("log", x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary("clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm({m, n, k}, a.values(), b.values(), out);
  Impl ai = a.shared(), bi = b.shared();
  return make_result("matmul", {m, n}, std::move(out), {a, b},
                     [ai, bi, m, n, k](const TensorImpl& o) {
                       if (ai->requires_grad) {
                         // dA = dC · Bᵀ
                         kernels::gemm({m, k, n, false, true, true}, o.grad, bi->values,
                                       grad_buffer(*ai));
                       }
                       if (bi->requires_grad) {
                         // dB = Aᵀ · dC
                         kernels::gemm({k, n, m, true, false, true}, ai->values, o.grad,
                                       grad_buffer(*bi));
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.values()[i * c + j];
  Impl ai = a.shared();
  return make_result("transpose", {c, r}, std::move(out), {a}, [ai, r, c](const TensorImpl& o) {
    if (!ai->requires_grad) return;
    auto& g = grad_buffer(*ai);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Impl ai = a.shared();
  return make_result("reshape", std::move(shape), copy_values(a), {a}, [ai](const TensorImpl& o) {
    if (ai->requires_grad) accumulate(*ai, o.grad);
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Impl xi = x.shared();
  return make_result("sum", {1}, {s}, {x}, [xi](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    auto& g = grad_buffer(*xi);
    for (auto& gi : g) gi += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.values()) s += v;
  Impl xi = x.shared();
  return make_result("mean", {1}, {s / n}, {x}, [xi, n](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    auto& g = grad_buffer(*xi);
    for (auto& gi : g) gi += o.grad[0] / n;
  });
}

namespace {

Tensor reduce_axis(const char* kind, const Tensor& x, std::size_t axis, bool average) {
  require_rank(kind, x, 2);
  if (axis > 1) throw DimensionError(std::string(kind) + ": axis out of range");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const std::size_t out_n = axis == 0 ? c : r;
  const double div = average ? static_cast<double>(axis == 0 ? r : c) : 1.0;
  std::vector<double> out(out_n, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += x.values()[i * c + j];
  for (auto& v : out) v /= div;
  Impl xi = x.shared();
  return make_result(kind, {out_n}, std::move(out), {x}, [xi, r, c, axis, div](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    auto& g = grad_buffer(*xi);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[axis == 0 ? j : i] / div;
  });
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis) { return reduce_axis("sum_axis", x, axis, false); }
Tensor mean(const Tensor& x, std::size_t axis) { return reduce_axis("mean_axis", x, axis, true); }

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const std::size_t rank = parts[0].rank();
  for (const auto& p : parts) {
    if (p.rank() != rank) throw DimensionError("concat: mixed ranks");
  }
  if (rank == 1) {
    if (axis != 0) throw DimensionError("concat: axis out of range for vectors");
    std::vector<double> out;
    std::vector<Impl> impls;
    for (const auto& p : parts) {
      out.insert(out.end(), p.values().begin(), p.values().end());
      impls.push_back(p.shared());
    }
    const std::size_t n = out.size();
    return make_result("concat", {n}, std::move(out), parts, [impls](const TensorImpl& o) {
      std::size_t off = 0;
      for (const auto& p : impls) {
        if (p->requires_grad) {
          auto& g = grad_buffer(*p);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[off + i];
        }
        off += p->values.size();
      }
    });
  }
  if (rank != 2 || axis > 1) throw DimensionError("concat: unsupported rank/axis");
  std::vector<Impl> impls;
  for (const auto& p : parts) impls.push_back(p.shared());
  if (axis == 0) {
    const std::size_t c = parts[0].dim(1);
    std::size_t rows = 0;
    std::vector<double> out;
    for (const auto& p : parts) {
      if (p.dim(1) != c) {
        throw DimensionError("concat rows: column mismatch " + shape_str(parts[0].shape()) +
                             " vs " + shape_str(p.shape()));
      }
      rows += p.dim(0);
      out.insert(out.end(), p.values().begin(), p.values().end());
    }
    return make_result("concat_rows", {rows, c}, std::move(out), parts, [impls](const TensorImpl& o) {
      std::size_t off = 0;
      for (const auto& p : impls) {
        if (p->requires_grad) {
          auto& g = grad_buffer(*p);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[off + i];
        }
        off += p->values.size();
      }
    });
  }
  const std::size_t r = parts[0].dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != r) {
      throw DimensionError("concat cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    cols += p.dim(1);
  }
  std::vector<double> out(r * cols);
  std::size_t coff = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < pc; ++j) out[i * cols + coff + j] = p.values()[i * pc + j];
    coff += pc;
  }
  return make_result("concat_cols", {r, cols}, std::move(out), parts,
                     [impls, r, cols](const TensorImpl& o) {
                       std::size_t coff = 0;
                       for (const auto& p : impls) {
                         const std::size_t pc = p->shape[1];
                         if (p->requires_grad) {
                           auto& g = grad_buffer(*p);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < pc; ++j) g[i * pc + j] += o.grad[i * cols + coff + j];
                         }
                         coff += pc;
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t len = x.rank() == 1 ? x.dim(0) : (x.rank() == 2 ? x.dim(0) : 0);
  if (len == 0) throw DimensionError("slice: expected vector or matrix, got " + shape_str(x.shape()));
  if (begin >= end || end > len) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t stride = x.rank() == 2 ? x.dim(1) : 1;
  std::vector<double> out(x.values().begin() + begin * stride, x.values().begin() + end * stride);
  Shape shape = x.rank() == 2 ? Shape{end - begin, stride} : Shape{end - begin};
  Impl xi = x.shared();
  const std::size_t off = begin * stride;
  return make_result("slice", std::move(shape), std::move(out), {x}, [xi, off](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    auto& g = grad_buffer(*xi);
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[off + i] += o.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (begin >= end || end > c) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.values()[i * c + begin + j];
  Impl xi = x.shared();
  return make_result("slice_cols", {r, w}, std::move(out), {x},
                     [xi, r, c, w, begin](const TensorImpl& o) {
                       if (!xi->requires_grad) return;
                       auto& g = grad_buffer(*xi);
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += o.grad[i * w + j];
                     });
}

Tensor row(const Tensor& x, std::size_t i) {
  require_rank("row", x, 2);
  return reshape(slice(x, i, i + 1), {x.dim(1)});
}

Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& ids) {
  require_rank("gather_rows", table, 2);
  if (ids.empty()) throw ContractError("gather_rows: empty id list");
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw ContractError("gather_rows: id " + std::to_string(ids[i]) + " outside [0, " +
                          std::to_string(v) + ")");
    }
    std::copy_n(table.values().begin() + ids[i] * d, d, out.begin() + i * d);
  }
  Impl ti = table.shared();
  return make_result("gather_rows", {ids.size(), d}, std::move(out), {table},
                     [ti, ids, d](const TensorImpl& o) {
                       if (!ti->requires_grad) return;
                       auto& g = grad_buffer(*ti);
                       for (std::size_t i = 0; i < ids.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j) g[ids[i] * d + j] += o.grad[i * d + j];
                     });
}

namespace {

// Moves `axis` of a rank<=2 tensor into the contiguous position; returns
// (rows, cols, transposed).
std::tuple<std::size_t, std::size_t, bool> softmax_layout(const char* op, const Tensor& x,
                                                           std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_str(x.shape()));
  }
  if (x.rank() == 1) return {1, x.dim(0), false};
  if (x.rank() != 2) throw DimensionError(std::string(op) + ": rank > 2 unsupported");
  if (axis == 1) return {x.dim(0), x.dim(1), false};
  return {x.dim(1), x.dim(0), true};
}

std::vector<double> to_layout(std::span<const double> v, std::size_t rows, std::size_t cols,
                              bool transposed) {
  if (!transposed) return {v.begin(), v.end()};
  // stored as [cols × rows]; produce [rows × cols]
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t j = 0; j < rows; ++j) out[j * cols + i] = v[i * rows + j];
  return out;
}

std::vector<double> from_layout(const std::vector<double>& v, std::size_t rows, std::size_t cols,
                                bool transposed) {
  if (!transposed) return v;
  std::vector<double> out(v.size());
  for (std::size_t j = 0; j < rows; ++j)
    for (std::size_t i = 0; i < cols; ++i) out[i * rows + j] = v[j * cols + i];
  return out;
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  auto [rows, cols, tr] = softmax_layout("softmax", x, axis);
  auto in = to_layout(x.values(), rows, cols, tr);
  std::vector<double> y(in.size());
  kernels::softmax_rows(rows, cols, in, y);
  Impl xi = x.shared();
  return make_result("softmax", x.shape(), from_layout(y, rows, cols, tr), {x},
                     [xi, rows, cols, tr](const TensorImpl& o) {
                       if (!xi->requires_grad) return;
                       auto yv = to_layout(o.values, rows, cols, tr);
                       auto gy = to_layout(o.grad, rows, cols, tr);
                       std::vector<double> gx(yv.size());
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += gy[r * cols + c] * yv[r * cols + c];
                         for (std::size_t c = 0; c < cols; ++c)
                           gx[r * cols + c] = yv[r * cols + c] * (gy[r * cols + c] - dot);
                       }
                       accumulate(*xi, from_layout(gx, rows, cols, tr));
                     });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  auto [rows, cols, tr] = softmax_layout("log_softmax", x, axis);
  auto in = to_layout(x.values(), rows, cols, tr);
  std::vector<double> y(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * cols;
    double mx = *std::max_element(xr, xr + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(xr[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = xr[c] - lse;
  }
  Impl xi = x.shared();
  return make_result("log_softmax", x.shape(), from_layout(y, rows, cols, tr), {x},
                     [xi, rows, cols, tr](const TensorImpl& o) {
                       if (!xi->requires_grad) return;
                       auto yv = to_layout(o.values, rows, cols, tr);
                       auto gy = to_layout(o.grad, rows, cols, tr);
                       std::vector<double> gx(yv.size());
                       for (std::size_t r = 0; r < rows; ++r) {
                         double gs = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) gs += gy[r * cols + c];
                         for (std::size_t c = 0; c < cols; ++c)
                           gx[r * cols + c] = gy[r * cols + c] - std::exp(yv[r * cols + c]) * gs;
                       }
                       accumulate(*xi, from_layout(gx, rows, cols, tr));
                     });
}

Tensor masked_fill(const Tensor& x, const std::vector<std::uint8_t>& mask, double value) {
  if (mask.size() != x.size()) {
    throw DimensionError("masked_fill: mask of " + std::to_string(mask.size()) +
                         " entries for tensor " + shape_str(x.shape()));
  }
  auto out = copy_values(x);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  Impl xi = x.shared();
  return make_result("masked_fill", x.shape(), std::move(out), {x}, [xi, mask](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    auto& g = grad_buffer(*xi);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!mask[i]) g[i] += o.grad[i];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  auto [rows, cols] = as_matrix(x);
  if (gain.rank() != 1 || gain.dim(0) != cols || bias.shape() != gain.shape()) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " for input " + shape_str(x.shape()));
  }
  std::vector<double> xhat(x.size()), inv_std(rows), out(x.size());
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += xv[r * cols + c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = xv[r * cols + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const auto i = r * cols + c;
      xhat[i] = (xv[i] - mu) * inv_std[r];
      out[i] = xhat[i] * gain.values()[c] + bias.values()[c];
    }
  }
  Impl xi = x.shared(), gi = gain.shared(), bi = bias.shared();
  return make_result("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                     [xi, gi, bi, xhat, inv_std, rows, cols](const TensorImpl& o) {
                       if (gi->requires_grad) {
                         auto& g = grad_buffer(*gi);
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % cols] += o.grad[i] * xhat[i];
                       }
                       if (bi->requires_grad) {
                         auto& g = grad_buffer(*bi);
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % cols] += o.grad[i];
                       }
                       if (!xi->requires_grad) return;
                       auto& g = grad_buffer(*xi);
                       const double n = static_cast<double>(cols);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) {
                           const auto i = r * cols + c;
                           const double dxh = o.grad[i] * gi->values[c];
                           s1 += dxh;
                           s2 += dxh * xhat[i];
                         }
                         for (std::size_t c = 0; c < cols; ++c) {
                           const auto i = r * cols + c;
                           const double dxh = o.grad[i] * gi->values[c];
                           g[i] += inv_std[r] * (dxh - s1 / n - xhat[i] * s2 / n);
                         }
                       }
                     });
}

namespace {

Tensor cross_entropy_impl(const char* kind, const Tensor& logits,
                          const std::vector<std::int64_t>& targets, std::int64_t ignore_index,
                          bool average) {
  require_rank(kind, logits, 2);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (targets.size() != n) {
    throw DimensionError(std::string(kind) + ": " + std::to_string(targets.size()) +
                         " targets for logits " + shape_str(logits.shape()));
  }
  std::size_t count = 0;
  for (auto t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw ContractError(std::string(kind) + ": target " + std::to_string(t) + " outside [0, " +
                          std::to_string(c) + ")");
    }
    ++count;
  }
  if (count == 0) throw ContractError(std::string(kind) + ": every target is ignored");
  std::vector<double> probs(n * c);
  double loss = 0.0;
  const auto lv = logits.values();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = lv.data() + r * c;
    const double mx = *std::max_element(xr, xr + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(xr[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(xr[j] - lse);
    if (targets[r] != ignore_index) loss += lse - xr[targets[r]];
  }
  const double denom = average ? static_cast<double>(count) : 1.0;
  Impl li = logits.shared();
  return make_result(kind, {1}, {loss / denom}, {logits},
                     [li, probs = std::move(probs), targets, ignore_index, n, c, denom](const TensorImpl& o) {
                       if (!li->requires_grad) return;
                       auto& g = grad_buffer(*li);
                       const double s = o.grad[0] / denom;
                       for (std::size_t r = 0; r < n; ++r) {
                         if (targets[r] == ignore_index) continue;
                         for (std::size_t j = 0; j < c; ++j) g[r * c + j] += s * probs[r * c + j];
                         g[r * c + targets[r]] -= s;
                       }
                     });
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& targets,
                     std::int64_t ignore_index) {
  return cross_entropy_impl("cross_entropy", logits, targets, ignore_index, true);
}

Tensor cross_entropy_sum(const Tensor& logits, const std::vector<std::int64_t>& targets,
                         std::int64_t ignore_index) {
  return cross_entropy_impl("cross_entropy_sum", logits, targets, ignore_index, false);
}

Tensor gaussian_sample(const Tensor& mean, const Tensor& log_variance, const Tensor& noise) {
  require_same_shape("gaussian_sample", mean, log_variance);
  require_same_shape("gaussian_sample", mean, noise);
  return add(mean, mul(exp(scale(log_variance, 0.5)), noise));
}

Tensor straight_through(const Tensor& hard, const Tensor& soft) {
  require_same_shape("straight_through", hard, soft);
  Impl si = soft.shared();
  return make_result("straight_through", hard.shape(), copy_values(hard), {soft},
                     [si](const TensorImpl& o) {
                       if (si->requires_grad) accumulate(*si, o.grad);
                     });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  if (x.rank() != 2 || s.rank() != 1 || s.dim(0) != x.dim(0)) {
    throw DimensionError("scale_rows: " + shape_str(x.shape()) + " by " + shape_str(s.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = s.values()[r] * x.values()[r * cols + c];
  Impl xi = x.shared(), si = s.shared();
  return make_result("scale_rows", x.shape(), std::move(out), {x, s}, [xi, si, rows, cols](const TensorImpl& o) {
    if (xi->requires_grad) {
      auto& g = grad_buffer(*xi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += o.grad[r * cols + c] * si->values[r];
    }
    if (si->requires_grad) {
      auto& g = grad_buffer(*si);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[r] += o.grad[r * cols + c] * xi->values[r * cols + c];
    }
  });
}

}  // namespace todkat
