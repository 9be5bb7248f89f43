#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lcpvae {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// The element count always equals the product of the shape and every value
/// is finite; both are checked on construction. A rank-0 shape holds one
/// scalar.
class Tensor {
 public:
  Tensor() : shape_{}, data_{0.0} {}
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  /// A [1, n] row built from `values`.
  static Tensor row(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  // Mutable access is reserved for parameter updates and gradient buffers.
  std::span<double> mutable_data() { return data_; }
  const std::vector<double>& vector() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  /// Copy of row `r` of a 2-D tensor as a [1, cols] tensor.
  Tensor row_at(std::size_t r) const;
  std::vector<double> row_vector(std::size_t r) const;

  /// Bitwise equality of shape and values.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Throws NumericalError naming `what` if any value is NaN or infinite.
void require_finite(std::span<const double> values, const std::string& what);

/// Stacks the given rows of `table` ([K, n]) into a [rows.size(), n] tensor.
Tensor gather_rows(const Tensor& table, std::span<const int> rows);

}  // namespace lcpvae
