// Serial reference vs OpenMP kernels. Thread count is the benchmark's second
// argument for the parallel variants; sizes cover the circles MLP shapes.

#include <benchmark/benchmark.h>

#include <vector>

#include "cdl/kernels.hpp"
#include "cdl/rng.hpp"

namespace ks = cdl::kernels::serial;
namespace kp = cdl::kernels::parallel;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  cdl::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * rng.uniform() - 1.0;
  return v;
}

// batch x in  times  in x out, as in a dense layer
template <bool Parallel>
void BM_gemm_nn(benchmark::State& state) {
  const std::size_t m = 16, k = static_cast<std::size_t>(state.range(0)), n = 128;
  if (Parallel) kp::set_num_threads(static_cast<int>(state.range(1)));
  const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if (Parallel) kp::gemm_nn(a, b, c, m, k, n);
    else ks::gemm_nn(a, b, c, m, k, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * m * k * n));
}

// weight gradient: A^T G
template <bool Parallel>
void BM_gemm_tn(benchmark::State& state) {
  const std::size_t m = 16, k = static_cast<std::size_t>(state.range(0)), n = 128;
  if (Parallel) kp::set_num_threads(static_cast<int>(state.range(1)));
  const auto a = random_vec(m * k, 3), g = random_vec(m * n, 4);
  std::vector<double> c(k * n);
  for (auto _ : state) {
    if (Parallel) kp::gemm_tn(a, g, c, m, k, n);
    else ks::gemm_tn(a, g, c, m, k, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * m * k * n));
}

template <bool Parallel>
void BM_sigmoid(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  if (Parallel) kp::set_num_threads(static_cast<int>(state.range(1)));
  const auto x = random_vec(n, 5);
  std::vector<double> y(n);
  for (auto _ : state) {
    if (Parallel) kp::unary_forward(cdl::kernels::Unary::sigmoid, 0, x, y);
    else ks::unary_forward(cdl::kernels::Unary::sigmoid, 0, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}

template <bool Parallel>
void BM_axpy(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  if (Parallel) kp::set_num_threads(static_cast<int>(state.range(1)));
  const auto x = random_vec(n, 6);
  auto y = random_vec(n, 7);
  for (auto _ : state) {
    if (Parallel) kp::axpy(1e-9, x, y);
    else ks::axpy(1e-9, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}

}  // namespace

BENCHMARK(BM_gemm_nn<false>)->Args({768, 1})->Args({1536, 1});
BENCHMARK(BM_gemm_nn<true>)->ArgsProduct({{768, 1536}, {1, 2, 4}});
BENCHMARK(BM_gemm_tn<false>)->Args({768, 1})->Args({1536, 1});
BENCHMARK(BM_gemm_tn<true>)->ArgsProduct({{768, 1536}, {1, 2, 4}});
BENCHMARK(BM_sigmoid<false>)->Args({1 << 16, 1});
BENCHMARK(BM_sigmoid<true>)->ArgsProduct({{1 << 16}, {1, 2, 4}});
BENCHMARK(BM_axpy<false>)->Args({1 << 18, 1});
BENCHMARK(BM_axpy<true>)->ArgsProduct({{1 << 18}, {1, 2, 4}});

BENCHMARK_MAIN();
