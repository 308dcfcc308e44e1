#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace disco {

/// Dense row-major matrix of doubles.
///
/// The product kernels accumulate every output element over the inner
/// dimension in ascending order, independent of how many rows are batched
/// together. Rendering relies on this: a sample evaluated alone or inside a
/// large batch produces bit-identical results, which is what makes the pruned
/// and naive renderers (and tile partitions) agree exactly.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix row_vector(std::span<const double> values);
  static Matrix column_vector(std::span<const double> values);
  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Matrix transposed() const;
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// out = a * b  (a: m x k, b: k x n).
Matrix matmul(const Matrix& a, const Matrix& b);

/// out = x * w^T + bias  (x: n x in, w: out x in, bias: 1 x out or empty).
/// This is the dense-layer forward used everywhere a batch of samples goes
/// through a fully connected layer.
Matrix linear_forward(const Matrix& x, const Matrix& w, const Matrix& bias);

double max_abs(const Matrix& m);
bool all_finite(const Matrix& m);

}  // namespace disco
