// Serial reference vs OpenMP kernels. Arg is the square matrix side.
#include <benchmark/benchmark.h>

#include <vector>

#include "todkat/numerics/kernels.hpp"
#include "todkat/numerics/rng.hpp"

namespace {

using namespace todkat;

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<double> c(n * n);
  kernels::GemmArgs args{n, n, n};
  for (auto _ : state) {
    Gemm(args, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <auto Softmax>
void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto x = filled(n * n, 3);
  std::vector<double> y(n * n);
  for (auto _ : state) {
    Softmax(n, n, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<&kernels::serial::gemm>)->Name("gemm/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<&kernels::omp::gemm>)->Name("gemm/openmp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Softmax<&kernels::serial::softmax_rows>)->Name("softmax/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_Softmax<&kernels::omp::softmax_rows>)->Name("softmax/openmp")->RangeMultiplier(4)->Range(64, 1024);

BENCHMARK_MAIN();
