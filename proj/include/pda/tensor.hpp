#pragma once

// Dense 2-D arrays and a reverse-mode differentiation tape.
//
// Every array in this library is a matrix; a row vector is 1 x n and a scalar
// is 1 x 1. A Tape records each primitive application in creation order, so
// node ids are already a topological order and backward() walks them once in
// reverse. Tensors hold persistent values (network parameters) together with
// their accumulated gradient; they enter a tape through Tape::watch().

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pda/errors.hpp"

namespace pda {

// Floor applied to probabilities before taking a log inside cross-entropies.
inline constexpr double kLogFloor = 1e-12;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix: " + std::to_string(data_.size()) + " values for shape " +
                           std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double item() const {
    if (size() != 1) throw UsageError("matrix: item() on non-scalar");
    return data_[0];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Matrix& operator+=(const Matrix& o) {
    if (!same_shape(o)) throw DimensionError("matrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Persistent array with an optional gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false)
      : value_(std::move(value)), requires_grad_(requires_grad) {}

  const Matrix& value() const { return value_; }
  Matrix& value() { return value_; }
  std::size_t rows() const { return value_.rows(); }
  std::size_t cols() const { return value_.cols(); }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  const std::optional<Matrix>& grad() const { return grad_; }
  void zero_grad() { grad_.reset(); }

  void accumulate_grad(const Matrix& g) {
    if (!g.same_shape(value_)) throw DimensionError("tensor: gradient shape mismatch");
    if (!g.all_finite()) throw NumericError("tensor: non-finite gradient");
    if (grad_) {
      *grad_ += g;
    } else {
      grad_ = g;
    }
  }

 private:
  Matrix value_;
  bool requires_grad_ = false;
  std::optional<Matrix> grad_;
};

class Tape;

// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Propagates the adjoint of node `self` into the adjoints of its inputs.
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Constant input; gradients stop here.
  Var input(Matrix value) { return record(std::move(value), {}, nullptr); }

  // Leaf bound to a tensor. backward() adds into tensor.grad() when the
  // tensor requires a gradient. The tensor must outlive the backward pass.
  Var watch(Tensor& tensor) {
    Var v = record(tensor.value(), {}, nullptr);
    if (tensor.requires_grad()) nodes_.back().leaf = &tensor;
    return v;
  }

  Var record(Matrix value, std::vector<std::size_t> inputs, Backprop backprop) {
    if (!value.all_finite()) throw NumericError("tape: operation produced a non-finite value");
    for (std::size_t in : inputs)
      if (in >= nodes_.size()) throw UsageError("tape: operand recorded after its consumer");
    nodes_.push_back(Node{std::move(value), Matrix{}, std::move(inputs), std::move(backprop), nullptr});
    return Var(this, nodes_.size() - 1);
  }

  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  // Adjoint of a node during backward(); allocated on first touch.
  Matrix& adjoint(std::size_t id) {
    Node& n = nodes_[id];
    if (n.adjoint.empty() && !n.value.empty()) n.adjoint = Matrix(n.value.rows(), n.value.cols());
    return n.adjoint;
  }
  bool has_adjoint(std::size_t id) const { return !nodes_[id].adjoint.empty(); }

  // Reverse sweep from a scalar loss. Adjoints are reset first, so calling
  // backward twice on one tape accumulates twice into tensor gradients.
  void backward(Var loss) {
    if (&loss.tape() != this) throw UsageError("backward: loss recorded on another tape");
    if (loss.value().size() != 1) throw UsageError("backward: loss must be a scalar");
    for (Node& n : nodes_) n.adjoint = Matrix{};
    adjoint(loss.id())(0, 0) = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      if (!has_adjoint(id)) continue;
      Node& n = nodes_[id];
      if (n.backprop) n.backprop(*this, id);
      if (n.leaf) n.leaf->accumulate_grad(n.adjoint);
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;
    std::vector<std::size_t> inputs;
    Backprop backprop;
    Tensor* leaf;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

namespace detail {

inline void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape()) throw UsageError(std::string(op) + ": operands on different tapes");
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

// Elementwise unary op with derivative expressed through (x, y).
template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y.values()[i] = fwd(x.values()[i]);
  const std::size_t ia = a.id();
  return t.record(std::move(y), {ia}, [ia, deriv](Tape& tp, std::size_t self) {
    const Matrix& xv = tp.value(ia);
    const Matrix& yv = tp.value(self);
    const Matrix& g = tp.adjoint(self);
    Matrix& ga = tp.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.values()[i] += g.values()[i] * deriv(xv.values()[i], yv.values()[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  detail::require_same_tape(a, b, "matmul");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  if (x.cols() != y.rows()) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(x.cols()) + " and " +
                         std::to_string(y.rows()) + " differ");
  }
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Matrix z(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x(i, p);
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) z(i, j) += xv * y(p, j);
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(z), {ia, ib}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    const Matrix& xv = t.value(ia);
    const Matrix& yv = t.value(ib);
    // dA = G * B^T
    Matrix& ga = t.adjoint(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g(i, j) * yv(p, j);
        ga(i, p) += s;
      }
    // dB = A^T * G
    Matrix& gb = t.adjoint(ib);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double xv_ip = xv(i, p);
        if (xv_ip == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) gb(p, j) += xv_ip * g(i, j);
      }
  });
}

inline Var add(Var a, Var b) {
  detail::require_same_tape(a, b, "add");
  detail::require_same_shape(a.value(), b.value(), "add");
  Matrix z = a.value();
  z += b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(z), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    t.adjoint(ia) += g;
    t.adjoint(ib) += g;
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_tape(a, b, "sub");
  detail::require_same_shape(a.value(), b.value(), "sub");
  Matrix z = a.value();
  for (std::size_t i = 0; i < z.size(); ++i) z.values()[i] -= b.value().values()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(z), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    t.adjoint(ia) += g;
    Matrix& gb = t.adjoint(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb.values()[i] -= g.values()[i];
  });
}

// Elementwise (Hadamard) product.
inline Var mul(Var a, Var b) {
  detail::require_same_tape(a, b, "mul");
  detail::require_same_shape(a.value(), b.value(), "mul");
  Matrix z = a.value();
  for (std::size_t i = 0; i < z.size(); ++i) z.values()[i] *= b.value().values()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(z), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    const Matrix& xa = t.value(ia);
    const Matrix& xb = t.value(ib);
    Matrix& ga = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.values()[i] += g.values()[i] * xb.values()[i];
    Matrix& gb = t.adjoint(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb.values()[i] += g.values()[i] * xa.values()[i];
  });
}

// y = factor * x + shift, elementwise.
inline Var affine(Var a, double factor, double shift = 0.0) {
  return detail::unary(
      a, [factor, shift](double x) { return factor * x + shift; },
      [factor](double, double) { return factor; });
}

inline Var scale(Var a, double factor) { return affine(a, factor, 0.0); }

// Adds a 1 x n bias row to every row of an m x n matrix.
inline Var add_bias(Var a, Var bias) {
  detail::require_same_tape(a, bias, "add_bias");
  const Matrix& x = a.value();
  const Matrix& b = bias.value();
  if (b.rows() != 1 || b.cols() != x.cols()) throw DimensionError("add_bias: bias must be 1 x cols");
  Matrix z = x;
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += b(0, j);
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().record(std::move(z), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    t.adjoint(ia) += g;
    Matrix& gb = t.adjoint(ib);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
  });
}

inline Var relu(Var a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var exp(Var a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

// Natural log. With floor > 0 computes log(max(x, floor)); entries at or below
// the floor receive zero gradient.
inline Var log(Var a, double floor = 0.0) {
  if (floor <= 0.0) {
    for (double v : a.value().values())
      if (!(v > 0.0)) throw NumericError("log: non-positive argument");
  }
  return detail::unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

// Row-wise softmax with per-row max subtraction.
inline Var softmax_rows(Var a) {
  const Matrix& x = a.value();
  if (!x.all_finite()) throw NumericError("softmax_rows: non-finite logits");
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      y(i, j) = std::exp(x(i, j) - mx);
      s += y(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) /= s;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    const Matrix& yv = t.value(self);
    Matrix& ga = t.adjoint(ia);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * yv(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += yv(i, j) * (g(i, j) - dot);
    }
  });
}

// Sum of all entries -> 1 x 1.
inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Matrix::scalar(s), {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.adjoint(self)(0, 0);
    for (double& v : t.adjoint(ia).values()) v += g;
  });
}

// Mean of all entries -> 1 x 1.
inline Var mean(Var a) {
  if (a.value().empty()) throw UsageError("mean: empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

// m x n -> m x 1.
inline Var row_sum(Var a) {
  const Matrix& x = a.value();
  Matrix z(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (double v : x.row(i)) z(i, 0) += v;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(z), {ia}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    Matrix& ga = t.adjoint(ia);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
  });
}

// Stacks a on top of b.
inline Var concat_rows(Var a, Var b) {
  detail::require_same_tape(a, b, "concat_rows");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  if (x.cols() != y.cols()) throw DimensionError("concat_rows: column counts differ");
  std::vector<double> v = x.values();
  v.insert(v.end(), y.values().begin(), y.values().end());
  const std::size_t ia = a.id(), ib = b.id(), split = x.size();
  return a.tape().record(Matrix(x.rows() + y.rows(), x.cols(), std::move(v)), {ia, ib},
                         [ia, ib, split](Tape& t, std::size_t self) {
                           const Matrix& g = t.adjoint(self);
                           Matrix& ga = t.adjoint(ia);
                           Matrix& gb = t.adjoint(ib);
                           for (std::size_t i = 0; i < split; ++i) ga.values()[i] += g.values()[i];
                           for (std::size_t i = split; i < g.size(); ++i) gb.values()[i - split] += g.values()[i];
                         });
}

// Places m x 1 columns side by side.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no operands");
  Tape& t = parts.front().tape();
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw UsageError("concat_cols: operands on different tapes");
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    ids.push_back(p.id());
    total += p.cols();
  }
  Matrix z(m, total);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& x = p.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) z(i, off + j) = x(i, j);
    off += x.cols();
  }
  return t.record(std::move(z), ids, [ids](Tape& tp, std::size_t self) {
    const Matrix& g = tp.adjoint(self);
    std::size_t o = 0;
    for (std::size_t id : ids) {
      Matrix& gi = tp.adjoint(id);
      for (std::size_t i = 0; i < gi.rows(); ++i)
        for (std::size_t j = 0; j < gi.cols(); ++j) gi(i, j) += g(i, o + j);
      o += gi.cols();
    }
  });
}

// Rows [begin, end).
inline Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Matrix& x = a.value();
  if (begin > end || end > x.rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t c = x.cols();
  std::vector<double> v(x.values().begin() + static_cast<std::ptrdiff_t>(begin * c),
                        x.values().begin() + static_cast<std::ptrdiff_t>(end * c));
  const std::size_t ia = a.id();
  return a.tape().record(Matrix(end - begin, c, std::move(v)), {ia}, [ia, begin, c](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    Matrix& ga = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.values()[begin * c + i] += g.values()[i];
  });
}

// Identity forward; backward multiplies the incoming adjoint by -lambda.
inline Var grad_reverse(Var a, double lambda) {
  if (!std::isfinite(lambda)) throw DomainError("grad_reverse: lambda must be finite");
  const std::size_t ia = a.id();
  return a.tape().record(a.value(), {ia}, [ia, lambda](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    Matrix& ga = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.values()[i] += -lambda * g.values()[i];
  });
}

// Copy of the value with gradients stopped.
inline Var detach(Var a) { return a.tape().input(a.value()); }

// ---------------------------------------------------------------------------
// Plain-value helpers
// ---------------------------------------------------------------------------

inline std::size_t argmax(std::span<const double> row) {
  if (row.empty()) throw UsageError("argmax: empty row");
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

// -log pred[label], with pred floored at kLogFloor.
inline double cross_entropy_row(std::span<const double> pred, std::size_t label) {
  if (label >= pred.size()) {
    throw DomainError("cross_entropy_row: label " + std::to_string(label) + " out of range for " +
                      std::to_string(pred.size()) + " classes");
  }
  return -std::log(std::max(pred[label], kLogFloor));
}

// -sum_j target_j log pred_j, with pred floored at kLogFloor.
inline double cross_entropy_row(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw DimensionError("cross_entropy_row: length mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (target[j] != 0.0) s -= target[j] * std::log(std::max(pred[j], kLogFloor));
  }
  return s;
}

}  // namespace pda
