#include "disco/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "disco/error.hpp"

namespace disco {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw Error(ErrorKind::ShapeMismatch, "matrix data size");
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::column_vector(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

namespace {

// out[r, :] += a[r, i] * b[i, :] for i ascending. Rows are processed four at a
// time so each row of b is loaded once per block; the per-element accumulation
// order never depends on the block.
void gemm_rows(const double* a, std::size_t m, std::size_t k, const double* b, std::size_t n,
               double* out) {
  std::size_t r = 0;
  for (; r + 4 <= m; r += 4) {
    double* o0 = out + (r + 0) * n;
    double* o1 = out + (r + 1) * n;
    double* o2 = out + (r + 2) * n;
    double* o3 = out + (r + 3) * n;
    const double* a0 = a + (r + 0) * k;
    const double* a1 = a + (r + 1) * k;
    const double* a2 = a + (r + 2) * k;
    const double* a3 = a + (r + 3) * k;
    for (std::size_t i = 0; i < k; ++i) {
      const double* bi = b + i * n;
      const double s0 = a0[i], s1 = a1[i], s2 = a2[i], s3 = a3[i];
      for (std::size_t c = 0; c < n; ++c) {
        const double bv = bi[c];
        o0[c] += s0 * bv;
        o1[c] += s1 * bv;
        o2[c] += s2 * bv;
        o3[c] += s3 * bv;
      }
    }
  }
  for (; r < m; ++r) {
    double* o = out + r * n;
    const double* ar = a + r * k;
    for (std::size_t i = 0; i < k; ++i) {
      const double* bi = b + i * n;
      const double s = ar[i];
      for (std::size_t c = 0; c < n; ++c) {
        // Same expression shape as the blocked path so contraction matches.
        const double bv = bi[c];
        o[c] += s * bv;
      }
    }
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorKind::ShapeMismatch, "matmul inner dimension");
  Matrix out(a.rows(), b.cols());
  gemm_rows(a.data(), a.rows(), a.cols(), b.data(), b.cols(), out.data());
  return out;
}

Matrix linear_forward(const Matrix& x, const Matrix& w, const Matrix& bias) {
  if (x.cols() != w.cols()) throw Error(ErrorKind::ShapeMismatch, "linear input width");
  if (!bias.empty() && bias.size() != w.rows())
    throw Error(ErrorKind::ShapeMismatch, "linear bias width");
  const Matrix wt = w.transposed();
  Matrix out(x.rows(), w.rows());
  gemm_rows(x.data(), x.rows(), x.cols(), wt.data(), wt.cols(), out.data());
  if (!bias.empty()) {
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
  }
  return out;
}

double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.values()) best = std::max(best, std::abs(v));
  return best;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace disco
