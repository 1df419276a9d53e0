#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gpldla {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major array of doubles with rank at most 2.
//
// A default-constructed tensor is a rank-0 scalar holding 0.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix view: rank 1 is treated as a single row, rank 0 as 1x1.
  std::size_t rows() const;
  std::size_t cols() const;

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  // Value of a single-element tensor.
  double item() const;

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t element_count(const Shape& shape);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// log(sum(exp(v))) over all elements, max-shifted.
double log_sum_exp(std::span<const double> v);
double log_sum_exp(const Tensor& v);

// Softmax of a vector, or row-wise softmax of a matrix.
Tensor softmax(const Tensor& v);

// Row of the argmax per matrix row; ties resolve to the lowest column.
std::vector<std::size_t> argmax_rows(const Tensor& m);

}  // namespace gpldla
