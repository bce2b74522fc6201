#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdl {

// Invalid user input: bad files, bad shapes, unknown names. Maps to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Runtime numeric failure (non-finite loss, overflow). Maps to exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major tensor of doubles. Rank 0 holds a single scalar.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::initializer_list<double> v) {
    return Tensor(Shape{v.size()}, std::vector<double>(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor(Shape{rows, cols}, std::move(data));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  // Extent of the last axis (1 for a scalar).
  std::size_t last_dim() const { return shape_.empty() ? 1 : shape_.back(); }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }
  const std::vector<double>& storage() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double item() const;

  // Same data, new shape with the same element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Bitwise comparison of values (distinguishes -0.0 from 0.0, NaN payloads).
bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace cdl
