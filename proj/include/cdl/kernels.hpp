#pragma once

// Dense kernels behind the autodiff primitives.
//
// Two implementations with identical signatures:
//   serial::   textbook loops, the reference used by tests.
//   parallel:: OpenMP, loop-reordered for cache and SIMD.
//
// Every output element is accumulated in the same order by both, so results
// are bitwise identical regardless of implementation or thread count.
// Matrices are row-major; dimensions follow the names (m x k times k x n).

#include <cstddef>
#include <span>

namespace cdl::kernels {

enum class Unary { relu, leaky_relu, tanh, sigmoid, abs };

#define CDL_KERNEL_DECLS                                                                      \
  /* C[m,n] = A[m,k] * B[k,n] */                                                              \
  void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,     \
               std::size_t m, std::size_t k, std::size_t n);                                  \
  /* C[k,n] = A[m,k]^T * G[m,n] */                                                            \
  void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> c,     \
               std::size_t m, std::size_t k, std::size_t n);                                  \
  /* C[m,k] = G[m,n] * B[k,n]^T */                                                            \
  void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> c,     \
               std::size_t m, std::size_t k, std::size_t n);                                  \
  void add(std::span<const double> x, std::span<const double> y, std::span<double> out);      \
  void sub(std::span<const double> x, std::span<const double> y, std::span<double> out);      \
  void mul(std::span<const double> x, std::span<const double> y, std::span<double> out);      \
  void scale(double s, std::span<const double> x, std::span<double> out);                     \
  /* y += x */                                                                                \
  void accumulate(std::span<const double> x, std::span<double> y);                            \
  /* y += s * x */                                                                            \
  void axpy(double s, std::span<const double> x, std::span<double> y);                        \
  void unary_forward(Unary op, double alpha, std::span<const double> x, std::span<double> out); \
  /* gx += gy * op'(x), given input x and output y = op(x) */                                 \
  void unary_backward(Unary op, double alpha, std::span<const double> x,                      \
                      std::span<const double> y, std::span<const double> gy,                  \
                      std::span<double> gx);                                                  \
  double sum(std::span<const double> x);

namespace serial {
CDL_KERNEL_DECLS
}  // namespace serial

namespace parallel {
CDL_KERNEL_DECLS
// Number of OpenMP threads the parallel kernels use; 0 restores the runtime default.
void set_num_threads(int n);
int num_threads();
}  // namespace parallel

#undef CDL_KERNEL_DECLS

// Scalar definitions shared by both implementations.
double unary_value(Unary op, double alpha, double x);
double unary_derivative(Unary op, double alpha, double x, double y);

}  // namespace cdl::kernels
