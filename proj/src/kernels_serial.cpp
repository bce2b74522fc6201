#include <cmath>

#include "cdl/kernels.hpp"

namespace cdl::kernels {

double unary_value(Unary op, double alpha, double x) {
  switch (op) {
    case Unary::relu: return x > 0.0 ? x : 0.0;
    case Unary::leaky_relu: return x > 0.0 ? x : alpha * x;
    case Unary::tanh: return std::tanh(x);
    case Unary::sigmoid:
      if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
      else {
        const double e = std::exp(x);
        return e / (1.0 + e);
      }
    case Unary::abs: return std::abs(x);
  }
  return 0.0;
}

double unary_derivative(Unary op, double alpha, double x, double y) {
  switch (op) {
    case Unary::relu: return x > 0.0 ? 1.0 : 0.0;
    case Unary::leaky_relu: return x > 0.0 ? 1.0 : alpha;
    case Unary::tanh: return 1.0 - y * y;
    case Unary::sigmoid: return y * (1.0 - y);
    case Unary::abs: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  }
  return 0.0;
}

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + p] * g[i * n + j];
      c[p * n + j] = acc;
    }
}

void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
      c[i * k + p] = acc;
    }
}

void add(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
}

void sub(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
}

void mul(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
}

void scale(double s, std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * x[i];
}

void accumulate(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
}

void axpy(double s, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

void unary_forward(Unary op, double alpha, std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = unary_value(op, alpha, x[i]);
}

void unary_backward(Unary op, double alpha, std::span<const double> x, std::span<const double> y,
                    std::span<const double> gy, std::span<double> gx) {
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * unary_derivative(op, alpha, x[i], y[i]);
}

double sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

}  // namespace serial
}  // namespace cdl::kernels
