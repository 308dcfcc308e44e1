#include "disco/autodiff.hpp"

#include <cmath>
#include <string>

#include "disco/activations.hpp"
#include "disco/error.hpp"

namespace disco::ad {
namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr)
    throw Error(ErrorKind::InvalidArgument, "vars belong to different tapes");
  return *a.tape;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw Error(ErrorKind::ShapeMismatch,
                std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
}

template <class F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

/// Elementwise op whose derivative is a function of (input, output).
template <class F, class D>
Var unary(Var a, F f, D df) {
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  const std::size_t ia = a.id;
  return t.record(map(a.value(), f), [=](const Matrix& g, Tape& tp) {
    const Matrix& x = tp.value(Var{&tp, ia});
    const Matrix& y = tp.value(Var{&tp, self});
    Matrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * df(x[i], y[i]);
    tp.accumulate(ia, d);
  });
}

Matrix column_sums(const Matrix& g) {
  Matrix out(1, g.cols());
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) out[c] += g(r, c);
  return out;
}

}  // namespace

const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::leaf(Matrix value) { return record(std::move(value), nullptr); }

Var Tape::record(Matrix value, Backward backward) {
  nodes_.push_back({std::move(value), std::move(backward)});
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Matrix& grad) {
  Matrix& g = grads_[id];
  if (g.empty() && !nodes_[id].value.empty()) {
    g = grad;
    return;
  }
  require_same_shape(g, grad, "accumulate");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[i];
}

std::vector<Matrix> Tape::backward(Var output) {
  if (output.tape != this) throw Error(ErrorKind::InvalidArgument, "var from another tape");
  if (value(output).rows() != 1 || value(output).cols() != 1)
    throw Error(ErrorKind::ShapeMismatch, "backward needs a scalar output");
  grads_.assign(nodes_.size(), Matrix());
  grads_[output.id] = Matrix::scalar(1.0);
  for (std::size_t i = output.id + 1; i-- > 0;) {
    if (grads_[i].empty() || !nodes_[i].backward) continue;
    nodes_[i].backward(grads_[i], *this);
  }
  std::vector<Matrix> out = std::move(grads_);
  grads_.clear();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].empty()) out[i] = Matrix(nodes_[i].value.rows(), nodes_[i].value.cols());
  return out;
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Matrix v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(v), [=](const Matrix& g, Tape& tp) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) { return add(a, neg(b)); }

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Matrix v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(v), [=](const Matrix& g, Tape& tp) {
    const Matrix& x = tp.value(Var{&tp, ia});
    const Matrix& y = tp.value(Var{&tp, ib});
    Matrix dx(g.rows(), g.cols()), dy(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
      dx[i] = g[i] * y[i];
      dy[i] = g[i] * x[i];
    }
    tp.accumulate(ia, dx);
    tp.accumulate(ib, dy);
  });
}

Var scale(Var a, double k) {
  return unary(a, [k](double x) { return x * k; }, [k](double, double) { return k; });
}

Var add_scalar(Var a, double k) {
  return unary(a, [k](double x) { return x + k; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Matrix& x = a.value();
  const Matrix& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols())
    throw Error(ErrorKind::ShapeMismatch, "add_row: row has wrong shape");
  Matrix v = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) v(i, c) += r[c];
  const std::size_t ia = a.id, ir = row.id;
  return t.record(std::move(v), [=](const Matrix& g, Tape& tp) {
    tp.accumulate(ia, g);
    tp.accumulate(ir, column_sums(g));
  });
}

Var mul_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Matrix& x = a.value();
  const Matrix& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols())
    throw Error(ErrorKind::ShapeMismatch, "mul_row: row has wrong shape");
  Matrix v = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) v(i, c) *= r[c];
  const std::size_t ia = a.id, ir = row.id;
  return t.record(std::move(v), [=](const Matrix& g, Tape& tp) {
    const Matrix& xv = tp.value(Var{&tp, ia});
    const Matrix& rv = tp.value(Var{&tp, ir});
    Matrix dx(g.rows(), g.cols()), dr(1, g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) {
        dx(i, c) = g(i, c) * rv[c];
        dr[c] += g(i, c) * xv(i, c);
      }
    tp.accumulate(ia, dx);
    tp.accumulate(ir, dr);
  });
}

Var mul_col(Var a, Var col) {
  Tape& t = tape_of(a, col);
  const Matrix& x = a.value();
  const Matrix& k = col.value();
  if (k.cols() != 1 || k.rows() != x.rows())
    throw Error(ErrorKind::ShapeMismatch, "mul_col: column has wrong shape");
  Matrix v = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) v(i, c) *= k[i];
  const std::size_t ia = a.id, ik = col.id;
  return t.record(std::move(v), [=](const Matrix& g, Tape& tp) {
    const Matrix& xv = tp.value(Var{&tp, ia});
    const Matrix& kv = tp.value(Var{&tp, ik});
    Matrix dx(g.rows(), g.cols()), dk(g.rows(), 1);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) {
        dx(i, c) = g(i, c) * kv[i];
        dk[i] += g(i, c) * xv(i, c);
      }
    tp.accumulate(ia, dx);
    tp.accumulate(ik, dk);
  });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return disco::sigmoid(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(a, [](double x) { return disco::softplus(x); },
               [](double x, double) { return disco::sigmoid(x); });
}

Var silu(Var a) {
  return unary(a, [](double x) { return disco::silu(x); },
               [](double x, double) { return silu_grad(x); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var pow_scalar(Var a, double p) {
  return unary(a, [p](double x) { return std::pow(x, p); },
               [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const std::size_t ia = a.id, ib = b.id;
  return t.record(disco::matmul(a.value(), b.value()), [=](const Matrix& g, Tape& tp) {
    const Matrix& x = tp.value(Var{&tp, ia});
    const Matrix& y = tp.value(Var{&tp, ib});
    tp.accumulate(ia, disco::matmul(g, y.transposed()));
    tp.accumulate(ib, disco::matmul(x.transposed(), g));
  });
}

Var linear(Var x, Var w, Var bias) {
  Tape& t = tape_of(x, w);
  tape_of(x, bias);
  const std::size_t ix = x.id, iw = w.id, ib = bias.id;
  return t.record(linear_forward(x.value(), w.value(), bias.value()),
                  [=](const Matrix& g, Tape& tp) {
                    const Matrix& xv = tp.value(Var{&tp, ix});
                    const Matrix& wv = tp.value(Var{&tp, iw});
                    tp.accumulate(ix, disco::matmul(g, wv));
                    tp.accumulate(iw, disco::matmul(g.transposed(), xv));
                    tp.accumulate(ib, column_sums(g));
                  });
}

Var linear(Var x, Var w) {
  Tape& t = tape_of(x, w);
  const std::size_t ix = x.id, iw = w.id;
  return t.record(linear_forward(x.value(), w.value(), Matrix()), [=](const Matrix& g, Tape& tp) {
    const Matrix& xv = tp.value(Var{&tp, ix});
    const Matrix& wv = tp.value(Var{&tp, iw});
    tp.accumulate(ix, disco::matmul(g, wv));
    tp.accumulate(iw, disco::matmul(g.transposed(), xv));
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id;
  return a.tape->record(a.value().transposed(), [=](const Matrix& g, Tape& tp) {
    tp.accumulate(ia, g.transposed());
  });
}

Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id;
  const std::size_t r = a.rows(), c = a.cols();
  return a.tape->record(Matrix::scalar(s), [=](const Matrix& g, Tape& tp) {
    tp.accumulate(ia, Matrix(r, c, g[0]));
  });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum_all(a), n > 0 ? 1.0 / n : 0.0);
}

Var sum_rows(Var a) {
  const Matrix& x = a.value();
  Matrix v(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) v[i] += x(i, c);
  const std::size_t ia = a.id, cols = x.cols();
  return a.tape->record(std::move(v), [=](const Matrix& g, Tape& tp) {
    Matrix d(g.rows(), cols);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t c = 0; c < cols; ++c) d(i, c) = g[i];
    tp.accumulate(ia, d);
  });
}

Var sum_cols(Var a) {
  const std::size_t ia = a.id, rows = a.rows();
  return a.tape->record(column_sums(a.value()), [=](const Matrix& g, Tape& tp) {
    Matrix d(rows, g.cols());
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) d(i, c) = g[c];
    tp.accumulate(ia, d);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::InvalidArgument, "concat of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw Error(ErrorKind::ShapeMismatch, "concat_cols: row counts differ");
    tape_of(parts[0], p);
    cols += p.cols();
  }
  Matrix v(rows, cols);
  std::vector<std::size_t> ids, widths;
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const Matrix& x = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t c = 0; c < x.cols(); ++c) v(i, c0 + c) = x(i, c);
    c0 += x.cols();
    ids.push_back(p.id);
    widths.push_back(x.cols());
  }
  return parts[0].tape->record(std::move(v), [=](const Matrix& g, Tape& tp) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Matrix d(g.rows(), widths[k]);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t c = 0; c < widths[k]; ++c) d(i, c) = g(i, off + c);
      tp.accumulate(ids[k], d);
      off += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::InvalidArgument, "concat of nothing");
  const std::size_t cols = parts[0].cols();
  std::vector<double> data;
  std::vector<std::size_t> ids, heights;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw Error(ErrorKind::ShapeMismatch, "concat_rows: widths differ");
    tape_of(parts[0], p);
    const auto vals = p.value().values();
    data.insert(data.end(), vals.begin(), vals.end());
    ids.push_back(p.id);
    heights.push_back(p.rows());
  }
  const std::size_t rows = data.size() / (cols ? cols : 1);
  return parts[0].tape->record(Matrix(rows, cols, std::move(data)),
                               [=](const Matrix& g, Tape& tp) {
                                 std::size_t off = 0;
                                 for (std::size_t k = 0; k < ids.size(); ++k) {
                                   const auto first = g.values().begin() +
                                                      static_cast<std::ptrdiff_t>(off * cols);
                                   tp.accumulate(ids[k],
                                                 Matrix(heights[k], cols,
                                                        std::vector<double>(
                                                            first, first + static_cast<std::ptrdiff_t>(
                                                                               heights[k] * cols))));
                                   off += heights[k];
                                 }
                               });
}

Var slice_cols(Var a, std::size_t first, std::size_t count) {
  const Matrix& x = a.value();
  if (first + count > x.cols()) throw Error(ErrorKind::IndexOutOfRange, "slice_cols out of range");
  Matrix v(x.rows(), count);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < count; ++c) v(i, c) = x(i, first + c);
  const std::size_t ia = a.id, cols = x.cols();
  return a.tape->record(std::move(v), [=](const Matrix& g, Tape& tp) {
    Matrix d(g.rows(), cols);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t c = 0; c < count; ++c) d(i, first + c) = g(i, c);
    tp.accumulate(ia, d);
  });
}

Var slice_rows(Var a, std::size_t first, std::size_t count) {
  if (first + count > a.rows()) throw Error(ErrorKind::IndexOutOfRange, "slice_rows out of range");
  std::vector<std::size_t> index(count);
  for (std::size_t i = 0; i < count; ++i) index[i] = first + i;
  return gather_rows(a, std::move(index));
}

Var gather_rows(Var a, std::vector<std::size_t> index) {
  const Matrix& x = a.value();
  Matrix v(index.size(), x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.rows()) throw Error(ErrorKind::IndexOutOfRange, "gather_rows index");
    for (std::size_t c = 0; c < x.cols(); ++c) v(i, c) = x(index[i], c);
  }
  const std::size_t ia = a.id, rows = x.rows();
  return a.tape->record(std::move(v), [=, index = std::move(index)](const Matrix& g, Tape& tp) {
    Matrix d(rows, g.cols());
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) d(index[i], c) += g(i, c);
    tp.accumulate(ia, d);
  });
}

Var sparse_rows(Var a, SparseRows weights) {
  const Matrix& x = a.value();
  if (weights.source_rows != x.rows())
    throw Error(ErrorKind::ShapeMismatch, "sparse_rows: source row count mismatch");
  Matrix v(weights.rows.size(), x.cols());
  for (std::size_t i = 0; i < weights.rows.size(); ++i)
    for (const auto& [j, w] : weights.rows[i]) {
      if (j >= x.rows()) throw Error(ErrorKind::IndexOutOfRange, "sparse_rows index");
      for (std::size_t c = 0; c < x.cols(); ++c) v(i, c) += w * x(j, c);
    }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(v), [=, weights = std::move(weights)](const Matrix& g,
                                                                         Tape& tp) {
    Matrix d(weights.source_rows, g.cols());
    for (std::size_t i = 0; i < weights.rows.size(); ++i)
      for (const auto& [j, w] : weights.rows[i])
        for (std::size_t c = 0; c < g.cols(); ++c) d(j, c) += w * g(i, c);
    tp.accumulate(ia, d);
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const Matrix& x = a.value();
  if (rows * cols != x.size()) throw Error(ErrorKind::ShapeMismatch, "reshape size mismatch");
  const std::size_t ia = a.id, r0 = x.rows(), c0 = x.cols();
  return a.tape->record(Matrix(rows, cols, std::vector<double>(x.values().begin(), x.values().end())),
                        [=](const Matrix& g, Tape& tp) {
                          tp.accumulate(ia, Matrix(r0, c0, std::vector<double>(g.values().begin(),
                                                                               g.values().end())));
                        });
}

namespace {

void check_offsets(const std::vector<std::size_t>& offsets, std::size_t rows) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != rows)
    throw Error(ErrorKind::ShapeMismatch, "segment offsets must span all rows");
  for (std::size_t k = 1; k < offsets.size(); ++k)
    if (offsets[k] < offsets[k - 1]) throw Error(ErrorKind::UnsortedInput, "segment offsets");
}

}  // namespace

Var segment_exclusive_cumsum(Var a, std::vector<std::size_t> offsets) {
  const Matrix& x = a.value();
  if (x.cols() != 1) throw Error(ErrorKind::ShapeMismatch, "cumsum needs a column vector");
  check_offsets(offsets, x.rows());
  Matrix v(x.rows(), 1);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    double acc = 0.0;
    for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) {
      v[i] = acc;
      acc += x[i];
    }
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(v), [=, offsets = std::move(offsets)](const Matrix& g,
                                                                         Tape& tp) {
    // d out[k] / d a[o] = 1 for o < k: suffix sums of g excluding self.
    Matrix d(g.rows(), 1);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      double acc = 0.0;
      for (std::size_t i = offsets[s + 1]; i-- > offsets[s];) {
        d[i] = acc;
        acc += g[i];
      }
    }
    tp.accumulate(ia, d);
  });
}

Var segment_sum(Var a, std::vector<std::size_t> offsets) {
  const Matrix& x = a.value();
  check_offsets(offsets, x.rows());
  const std::size_t segs = offsets.size() - 1;
  Matrix v(segs, x.cols());
  for (std::size_t s = 0; s < segs; ++s)
    for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i)
      for (std::size_t c = 0; c < x.cols(); ++c) v(s, c) += x(i, c);
  const std::size_t ia = a.id, rows = x.rows();
  return a.tape->record(std::move(v), [=, offsets = std::move(offsets)](const Matrix& g,
                                                                         Tape& tp) {
    Matrix d(rows, g.cols());
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
      for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i)
        for (std::size_t c = 0; c < g.cols(); ++c) d(i, c) = g(s, c);
    tp.accumulate(ia, d);
  });
}

}  // namespace disco::ad
