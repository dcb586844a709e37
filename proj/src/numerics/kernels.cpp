#include "todkat/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <omp.h>

namespace todkat::kernels {

namespace {

Backend g_backend = Backend::OpenMP;

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 15;

inline double a_at(const GemmArgs& g, std::span<const double> a, std::size_t i, std::size_t p) {
  return g.trans_a ? a[p * g.m + i] : a[i * g.k + p];
}

inline double b_at(const GemmArgs& g, std::span<const double> b, std::size_t p, std::size_t j) {
  return g.trans_b ? b[j * g.k + p] : b[p * g.n + j];
}

void softmax_row(std::size_t cols, const double* x, double* y) {
  double mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  for (std::size_t j = 0; j < cols; ++j) y[j] /= sum;
}

}  // namespace

void set_backend(Backend backend) { g_backend = backend; }
Backend backend() { return g_backend; }

namespace serial {

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  for (std::size_t i = 0; i < g.m; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      double s = g.accumulate ? c[i * g.n + j] : 0.0;
      for (std::size_t p = 0; p < g.k; ++p) s += a_at(g, a, i, p) * b_at(g, b, p, j);
      c[i * g.n + j] = s;
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) softmax_row(cols, x.data() + r * cols, y.data() + r * cols);
}

}  // namespace serial

namespace omp {

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  // Row-major B so the inner loop runs over contiguous j and vectorizes.
  // Each c[i][j] still accumulates its k terms in ascending order, matching serial::gemm.
  const double* bp = b.data();
  thread_local std::vector<double> bt;
  if (g.trans_b) {
    bt.resize(g.k * g.n);
    for (std::size_t j = 0; j < g.n; ++j)
      for (std::size_t p = 0; p < g.k; ++p) bt[p * g.n + j] = b[j * g.k + p];
    bp = bt.data();
  }
  const auto m = static_cast<long>(g.m);
  const bool parallel = g.m * g.n * g.k >= kParallelThreshold && g.m > 1;
  const std::size_t n = g.n, k = g.k;
  const double* ap = a.data();
  double* cp = c.data();
#pragma omp parallel for schedule(static) if (parallel)
  for (long ii = 0; ii < m; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* __restrict crow = cp + i * n;
    if (!g.accumulate) std::fill(crow, crow + n, 0.0);
    auto a_ip = [&](std::size_t p) { return g.trans_a ? ap[p * g.m + i] : ap[i * k + p]; };
    std::size_t p = 0;
    // four k-steps per pass over the row; the sum order per element is unchanged
    for (; p + 4 <= k; p += 4) {
      const double a0 = a_ip(p), a1 = a_ip(p + 1), a2 = a_ip(p + 2), a3 = a_ip(p + 3);
      const double* __restrict b0 = bp + p * n;
      const double* __restrict b1 = b0 + n;
      const double* __restrict b2 = b1 + n;
      const double* __restrict b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j) {
        double s = crow[j];
        s += a0 * b0[j];
        s += a1 * b1[j];
        s += a2 * b2[j];
        s += a3 * b3[j];
        crow[j] = s;
      }
    }
    for (; p < k; ++p) {
      const double av = a_ip(p);
      const double* __restrict brow = bp + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y) {
  const auto n = static_cast<long>(rows);
  const bool parallel = rows * cols >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (parallel)
  for (long r = 0; r < n; ++r) {
    const auto off = static_cast<std::size_t>(r) * cols;
    softmax_row(cols, x.data() + off, y.data() + off);
  }
}

}  // namespace omp

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  if (g_backend == Backend::Serial) {
    serial::gemm(args, a, b, c);
  } else {
    omp::gemm(args, a, b, c);
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y) {
  if (g_backend == Backend::Serial) {
    serial::softmax_rows(rows, cols, x, y);
  } else {
    omp::softmax_rows(rows, cols, x, y);
  }
}

}  // namespace todkat::kernels
