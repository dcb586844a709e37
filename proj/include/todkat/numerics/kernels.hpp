#pragma once

// Dense inner loops used by the tensor ops. Every kernel has a serial reference
// and an OpenMP variant; both sum in the same order per output element, so
// results are bit-identical for any thread count.

#include <cstddef>
#include <span>

namespace todkat::kernels {

enum class Backend { Serial, OpenMP };

/// Backend used by the tensor ops. Defaults to OpenMP.
void set_backend(Backend backend);
Backend backend();

// C[m×n] (+)= op(A) · op(B), row-major. op(A) is m×k, op(B) is k×n.
// trans_a: A is stored k×m. trans_b: B is stored n×k.
struct GemmArgs {
  std::size_t m, n, k;
  bool trans_a = false;
  bool trans_b = false;
  bool accumulate = false;
};

namespace serial {
void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);
}  // namespace serial

namespace omp {
void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);
}  // namespace omp

/// Dispatches on backend().
void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);

}  // namespace todkat::kernels
