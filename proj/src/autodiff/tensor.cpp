#include "logsparse/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "logsparse/common/error.hpp"

namespace logsparse::ad {

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += " x ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (values_.size() != element_count(shape_)) {
    throw ShapeError("tensor of shape " + shape_string(shape_) + " given " +
                     std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return matrix(r, c, std::move(values));
}

std::size_t Tensor::rows() const noexcept {
  if (shape_.size() >= 2) {
    return std::accumulate(shape_.begin(), shape_.end() - 1, std::size_t{1}, std::multiplies<>());
  }
  return 1;
}

std::size_t Tensor::cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  }
  return values_[0];
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

double max_abs_difference(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace logsparse::ad
