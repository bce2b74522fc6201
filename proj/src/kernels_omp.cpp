#include <omp.h>

#include <algorithm>
#include <vector>

#include "cdl/kernels.hpp"

namespace cdl::kernels::parallel {

namespace {

// Below this many elements the fork/join overhead dominates.
constexpr std::size_t kMinParallel = 1 << 14;
constexpr std::size_t kRowBlock = 32;

int g_threads = 0;

int threads() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

}  // namespace

void set_num_threads(int n) { g_threads = n < 0 ? 0 : n; }
int num_threads() { return threads(); }

// Rows of C are split into blocks; within a block the k loop is outermost so
// each row of B is read once per block. Per element the sum still runs over
// p = 0..k-1 in order, matching serial::gemm_nn.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto blocks = static_cast<long>((m + kRowBlock - 1) / kRowBlock);
  const bool par = m * k * n >= kMinParallel && blocks > 1;
#pragma omp parallel for schedule(static) num_threads(threads()) if (par)
  for (long blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kRowBlock;
    const std::size_t i1 = std::min(m, i0 + kRowBlock);
    std::fill(c.begin() + i0 * n, c.begin() + i1 * n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * n;
      for (std::size_t i = i0; i < i1; ++i) {
        const double av = a[i * k + p];
        double* crow = c.data() + i * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto blocks = static_cast<long>((k + kRowBlock - 1) / kRowBlock);
  const bool par = m * k * n >= kMinParallel && blocks > 1;
#pragma omp parallel for schedule(static) num_threads(threads()) if (par)
  for (long blk = 0; blk < blocks; ++blk) {
    const std::size_t p0 = static_cast<std::size_t>(blk) * kRowBlock;
    const std::size_t p1 = std::min(k, p0 + kRowBlock);
    std::fill(c.begin() + p0 * n, c.begin() + p1 * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double* grow = g.data() + i * n;
      for (std::size_t p = p0; p < p1; ++p) {
        const double av = a[i * k + p];
        double* crow = c.data() + p * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
      }
    }
  }
}

// Transposes B once so the inner loop runs over contiguous memory; the
// reduction index j is still visited in ascending order per element.
void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> bt(k * n);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];

  const auto blocks = static_cast<long>((m + kRowBlock - 1) / kRowBlock);
  const bool par = m * k * n >= kMinParallel && blocks > 1;
#pragma omp parallel for schedule(static) num_threads(threads()) if (par)
  for (long blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kRowBlock;
    const std::size_t i1 = std::min(m, i0 + kRowBlock);
    std::fill(c.begin() + i0 * k, c.begin() + i1 * k, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double* btrow = bt.data() + j * k;
      for (std::size_t i = i0; i < i1; ++i) {
        const double gv = g[i * n + j];
        double* crow = c.data() + i * k;
#pragma omp simd
        for (std::size_t p = 0; p < k; ++p) crow[p] += gv * btrow[p];
      }
    }
  }
}

#define CDL_ELEMENTWISE(expr)                                                          \
  const auto len = static_cast<long>(out.size());                                      \
  _Pragma("omp parallel for simd schedule(static) num_threads(threads()) if (out.size() >= kMinParallel)") \
  for (long i = 0; i < len; ++i) out[i] = (expr);

void add(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  CDL_ELEMENTWISE(x[i] + y[i])
}

void sub(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  CDL_ELEMENTWISE(x[i] - y[i])
}

void mul(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  CDL_ELEMENTWISE(x[i] * y[i])
}

void scale(double s, std::span<const double> x, std::span<double> out) {
  CDL_ELEMENTWISE(s * x[i])
}

void accumulate(std::span<const double> x, std::span<double> out) {
  CDL_ELEMENTWISE(out[i] + x[i])
}

void axpy(double s, std::span<const double> x, std::span<double> out) {
  CDL_ELEMENTWISE(out[i] + s * x[i])
}

#undef CDL_ELEMENTWISE

void unary_forward(Unary op, double alpha, std::span<const double> x, std::span<double> out) {
  const auto len = static_cast<long>(out.size());
#pragma omp parallel for schedule(static) num_threads(threads()) if (out.size() >= kMinParallel)
  for (long i = 0; i < len; ++i) out[i] = unary_value(op, alpha, x[i]);
}

void unary_backward(Unary op, double alpha, std::span<const double> x, std::span<const double> y,
                    std::span<const double> gy, std::span<double> gx) {
  const auto len = static_cast<long>(gx.size());
#pragma omp parallel for schedule(static) num_threads(threads()) if (gx.size() >= kMinParallel)
  for (long i = 0; i < len; ++i) gx[i] += gy[i] * unary_derivative(op, alpha, x[i], y[i]);
}

// Reductions stay sequential: a tree reduction would change the rounding.
double sum(std::span<const double> x) { return serial::sum(x); }

}  // namespace cdl::kernels::parallel
