#include "lcpvae/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

#include "lcpvae/error.hpp"

namespace lcpvae {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void require_finite(std::span<const double> values, const std::string& what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << what << ": non-finite value " << values[i] << " at flat index " << i;
      throw NumericalError(os.str());
    }
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
  require_finite(data_, "tensor construction");
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() requires a 2-D tensor, got " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() requires a 2-D tensor, got " + shape_string(shape_));
  return shape_[1];
}

double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::row_at(std::size_t r) const { return Tensor::row(row_vector(r)); }

std::vector<double> Tensor::row_vector(std::size_t r) const {
  const std::size_t n = cols();
  if (r >= rows()) throw ShapeError("row index out of range");
  return {data_.begin() + static_cast<std::ptrdiff_t>(r * n), data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * n)};
}

bool Tensor::identical(const Tensor& other) const {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

Tensor gather_rows(const Tensor& table, std::span<const int> rows) {
  const std::size_t n = table.cols();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (int r : rows) {
    if (r < 0 || static_cast<std::size_t>(r) >= table.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for table " +
                       shape_string(table.shape()));
    }
    const auto src = table.data().subspan(static_cast<std::size_t>(r) * n, n);
    out.insert(out.end(), src.begin(), src.end());
  }
  return Tensor({rows.size(), n}, std::move(out));
}

}  // namespace lcpvae
