#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace artuda {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& s);

// Dense n-dimensional array of 64-bit reals. Rank 0 is a scalar, rank 1 a
// vector, rank 2 a row-major (rows x cols) matrix; nothing here needs more.
// Stored values are always finite: the constructor and every tape primitive
// reject NaN/Inf instead of storing it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double v);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool is_scalar() const { return shape_.empty(); }

  /// Rows/cols of a rank-2 tensor (a rank-1 tensor is one row).
  std::size_t rows() const;
  std::size_t cols() const;

  double item() const;
  double operator[](std::size_t i) const { return values_[i]; }
  double at(std::size_t r, std::size_t c) const;

  std::span<const double> values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace artuda
