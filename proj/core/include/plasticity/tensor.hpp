#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace plasticity {

using Shape = std::vector<std::size_t>;

/// Dense row-major array of doubles.
///
/// The element count always equals the product of the shape. Most tensors in
/// this library are matrices (batch x features) or vectors (biases); scalars
/// are stored with shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Rows of a matrix; a vector is treated as one row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) noexcept {
    return std::span<double>(data_).subspan(r * cols(), cols());
  }

  double item() const;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t element_count(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Throws NonFiniteError naming `where` when any element is NaN or infinite.
void require_finite(const Tensor& t, const char* where);

/// Select rows by index into a new matrix.
Tensor gather_rows(const Tensor& m, std::span<const std::size_t> indices);

/// Bitwise comparison (distinguishes -0.0 from 0.0 and compares NaN payloads).
bool bit_identical(const Tensor& a, const Tensor& b) noexcept;

}  // namespace plasticity
