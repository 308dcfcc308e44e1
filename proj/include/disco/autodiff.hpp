#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "disco/matrix.hpp"

namespace disco::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order, so the tape is acyclic by construction and backward is a single
/// reverse sweep.
class Tape {
 public:
  using Backward = std::function<void(const Matrix& grad_out, Tape& tape)>;

  Var leaf(Matrix value);
  /// Same as leaf; the distinction is only for readability at call sites.
  Var constant(Matrix value) { return leaf(std::move(value)); }

  Var record(Matrix value, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradients of a 1x1 output with respect to every node (indexed by
  /// Var::id). Nodes the output does not depend on get zero matrices.
  std::vector<Matrix> backward(Var output);

  /// Used by backward closures.
  void accumulate(std::size_t id, const Matrix& grad);

 private:
  struct Node {
    Matrix value;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
};

// Elementwise (matching shapes unless noted).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double k);
Var add_scalar(Var a, double k);
Var neg(Var a);
/// a (n x c) + row (1 x c) broadcast over rows.
Var add_row(Var a, Var row);
/// a (n x c) * row (1 x c) broadcast over rows.
Var mul_row(Var a, Var row);
/// a (n x c) * col (n x 1) broadcast over columns.
Var mul_col(Var a, Var col);

Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var silu(Var a);
Var square(Var a);
Var pow_scalar(Var a, double p);

/// a (m x k) * b (k x n).
Var matmul(Var a, Var b);
/// x (n x in) * w^T (w: out x in) + bias (1 x out). Uses the same kernel as
/// the plain forward pass, so values agree bitwise with linear_forward.
Var linear(Var x, Var w, Var bias);
Var linear(Var x, Var w);
Var transpose(Var a);

Var sum_all(Var a);   // 1 x 1
Var sum_rows(Var a);  // n x 1 (sum across each row)
Var sum_cols(Var a);  // 1 x c (sum down each column)
Var mean_all(Var a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t first, std::size_t count);
Var slice_rows(Var a, std::size_t first, std::size_t count);
/// out.row(i) = a.row(index[i]).
Var gather_rows(Var a, std::vector<std::size_t> index);

/// Sparse row combination: out.row(i) = sum_j w_ij a.row(j). Used for
/// bilinear resampling and box filtering of flattened images.
struct SparseRows {
  std::size_t source_rows = 0;
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
};
Var sparse_rows(Var a, SparseRows weights);

Var reshape(Var a, std::size_t rows, std::size_t cols);

/// Column vector split into consecutive segments by offsets
/// (offsets.size() = segments + 1). Within each segment
/// out[k] = sum_{o<k} a[o].
Var segment_exclusive_cumsum(Var a, std::vector<std::size_t> offsets);
/// Per-segment row sums: (n x c) -> (segments x c).
Var segment_sum(Var a, std::vector<std::size_t> offsets);

}  // namespace disco::ad
