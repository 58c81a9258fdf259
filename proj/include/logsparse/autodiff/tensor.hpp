#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace logsparse::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  /// Rank 2: shape[0]. Rank 1 and 0 are viewed as a single row.
  std::size_t rows() const noexcept;
  /// Rank 2: shape[1]. Rank 1: shape[0]. Rank 0: 1.
  std::size_t cols() const noexcept;

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  /// Value of a single-element tensor.
  double item() const;

  void fill(double value);
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  // Aligned so Eigen's vectorized reductions split work the same way in
  // every run; with malloc alignment the summation order (and last bits)
  // could change between processes.
  using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

  Shape shape_;
  Storage values_;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

/// rows() x cols() view of the tensor's storage.
inline MatrixView as_matrix(Tensor& t) {
  return MatrixView(t.data(), static_cast<Eigen::Index>(t.rows()),
                    static_cast<Eigen::Index>(t.cols()));
}
inline ConstMatrixView as_matrix(const Tensor& t) {
  return ConstMatrixView(t.data(), static_cast<Eigen::Index>(t.rows()),
                         static_cast<Eigen::Index>(t.cols()));
}

/// Largest |a - b| over matching elements; throws ShapeError on mismatch.
double max_abs_difference(const Tensor& a, const Tensor& b);

}  // namespace logsparse::ad
