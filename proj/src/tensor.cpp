#include "gpldla/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gpldla/errors.hpp"

namespace gpldla {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {
  if (shape_.size() > 2) throw DimensionError("tensor rank above 2: " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 2) throw DimensionError("tensor rank above 2: " + shape_string(shape_));
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  return 1;
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  return 1;
}

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data_).subspan(r * cols(), cols());
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on non-scalar tensor " + shape_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(Shape{m, n});
  const auto ad = a.data();
  const auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bd.data() + p * n;
      double* orow = od.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose needs a matrix, got " + shape_string(a.shape()));
  Tensor out(Shape{a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw DomainError("log_sum_exp of an empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

double log_sum_exp(const Tensor& v) { return log_sum_exp(v.data()); }

Tensor softmax(const Tensor& v) {
  if (v.empty()) throw DomainError("softmax of an empty tensor");
  Tensor out = v;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double& x : row) {
      x = std::exp(x - mx);
      s += x;
    }
    for (double& x : row) x /= s;
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& m) {
  std::vector<std::size_t> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace gpldla
