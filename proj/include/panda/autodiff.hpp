#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "panda/common.hpp"

/// Minimal reverse-mode differentiation over dense row-major matrices.
///
/// A Tape records every primitive in insertion order; insertion order is a
/// topological order, so backward() is a single reverse sweep. Tapes are
/// rebuilt per forward pass and are single-threaded.
namespace panda::ad {

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  inline const Matrix& value() const;
  /// Gradient accumulated by the last backward(); zeros if none reached it.
  inline Matrix grad() const;
  inline bool requires_grad() const;

  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::array<Eigen::Index, 2> shape() const { return {rows(), cols()}; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor variable(Matrix value) { return push(std::move(value), true, {}); }
  Tensor constant(Matrix value) { return push(std::move(value), false, {}); }

  /// Records an op output. It requires a gradient iff any parent does.
  Tensor record(Matrix value, std::initializer_list<Tensor> parents, BackwardFn fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return nodes_[id].grad_set; }

  Matrix grad(std::size_t id) const {
    const auto& n = nodes_[id];
    if (!n.grad_set) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Adds `g` into the gradient of `t` if `t` requires one.
  template <typename Expr>
  void accumulate(const Tensor& t, const Expr& g) {
    auto& n = nodes_[t.id()];
    if (!n.requires_grad) return;
    if (!n.grad_set) {
      n.grad = g;
      n.grad_set = true;
    } else {
      n.grad += g;
    }
  }

  /// Mutable gradient buffer, allocated as zeros on first use.
  Matrix& grad_buffer(const Tensor& t) {
    auto& n = nodes_[t.id()];
    if (!n.grad_set) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
      n.grad_set = true;
    }
    return n.grad;
  }

  void zero_grad() {
    for (auto& n : nodes_) {
      n.grad.resize(0, 0);
      n.grad_set = false;
    }
  }

  /// Reverse sweep from a scalar root seeded with 1.
  void backward(const Tensor& root) {
    if (root.rows() != 1 || root.cols() != 1) {
      throw ShapeError("backward() without a seed needs a scalar root, got " +
                       shape_str(root.rows(), root.cols()));
    }
    backward(root, Matrix::Ones(1, 1));
  }

  /// Reverse sweep from `root` seeded with `seed` (same shape as root).
  void backward(const Tensor& root, const Matrix& seed) {
    if (seed.rows() != root.rows() || seed.cols() != root.cols()) {
      throw ShapeError("backward seed " + shape_str(seed.rows(), seed.cols()) + " vs root " +
                       shape_str(root.rows(), root.cols()));
    }
    zero_grad();
    accumulate(root, seed);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad || !n.backward || !n.grad_set) continue;
      // Node storage is stable during the sweep (no pushes), so holding a
      // reference across the callback is safe.
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool grad_set = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tensor push(Matrix value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Matrix(), false, requires_grad, std::move(fn)});
    return Tensor(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Tensor::value() const { return tape_->value(id_); }
inline Matrix Tensor::grad() const { return tape_->grad(id_); }
inline bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

using Index = std::vector<Eigen::Index>;

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
  }
}

inline void check_rows(const char* op, const Index& idx, Eigen::Index rows) {
  for (auto i : idx) {
    if (i < 0 || i >= rows) {
      throw BoundsError(std::string(op) + ": row index " + std::to_string(i) + " out of range for " +
                       std::to_string(rows) + " rows");
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " x " + shape_str(b.rows(), b.cols()));
  }
  Matrix out = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

/// x * w^T: rows of x are inputs, w is stored (out_features x in_features).
inline Tensor linear(const Tensor& x, const Tensor& w) {
  if (x.cols() != w.cols()) {
    throw ShapeError("linear: input " + shape_str(x.rows(), x.cols()) + " vs weight " +
                     shape_str(w.rows(), w.cols()));
  }
  Matrix out = x.value() * w.value().transpose();
  return x.tape()->record(std::move(out), {x, w}, [x, w](Tape& t, const Matrix& g) {
    if (x.requires_grad()) t.accumulate(x, g * w.value());
    if (w.requires_grad()) t.accumulate(w, g.transpose() * x.value());
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  Matrix out = a.value() + b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

/// Adds a 1 x cols row vector to every row.
inline Tensor add_row(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_row: " + shape_str(x.rows(), x.cols()) + " + bias " +
                     shape_str(bias.rows(), bias.cols()));
  }
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return x.tape()->record(std::move(out), {x, bias}, [x, bias](Tape& t, const Matrix& g) {
    t.accumulate(x, g);
    if (bias.requires_grad()) t.accumulate(bias, g.colwise().sum());
  });
}

inline Tensor scale(const Tensor& x, double s) {
  Matrix out = x.value() * s;
  return x.tape()->record(std::move(out), {x}, [x, s](Tape& t, const Matrix& g) { t.accumulate(x, g * s); });
}

/// x * s for a 1 x 1 tensor s.
inline Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: scalar expected, got " + shape_str(s.rows(), s.cols()));
  Matrix out = x.value() * s.value()(0, 0);
  return x.tape()->record(std::move(out), {x, s}, [x, s](Tape& t, const Matrix& g) {
    if (x.requires_grad()) t.accumulate(x, g * s.value()(0, 0));
    if (s.requires_grad()) {
      Matrix gs(1, 1);
      gs(0, 0) = (g.array() * x.value().array()).sum();
      t.accumulate(s, gs);
    }
  });
}

/// Concatenation along rows (axis 0) or columns (axis 1).
inline Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (axis == 0) {
    if (a.cols() != b.cols()) {
      throw ShapeError("concat(axis=0): " + shape_str(a.rows(), a.cols()) + " vs " + shape_str(b.rows(), b.cols()));
    }
    Matrix out(a.rows() + b.rows(), a.cols());
    out << a.value(), b.value();
    const auto ra = a.rows(), rb = b.rows();
    return a.tape()->record(std::move(out), {a, b}, [a, b, ra, rb](Tape& t, const Matrix& g) {
      t.accumulate(a, g.topRows(ra));
      t.accumulate(b, g.bottomRows(rb));
    });
  }
  if (axis == 1) {
    if (a.rows() != b.rows()) {
      throw ShapeError("concat(axis=1): " + shape_str(a.rows(), a.cols()) + " vs " + shape_str(b.rows(), b.cols()));
    }
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    const auto ca = a.cols(), cb = b.cols();
    return a.tape()->record(std::move(out), {a, b}, [a, b, ca, cb](Tape& t, const Matrix& g) {
      t.accumulate(a, g.leftCols(ca));
      t.accumulate(b, g.rightCols(cb));
    });
  }
  throw ShapeError("concat: axis must be 0 or 1");
}

// ---------------------------------------------------------------------------
// Indexing
// ---------------------------------------------------------------------------

/// out[i] = x[idx[i]].
inline Tensor row_gather(const Tensor& x, Index idx) {
  detail::check_rows("row_gather", idx, x.rows());
  const auto& xv = x.value();
  Matrix out(static_cast<Eigen::Index>(idx.size()), xv.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = xv.row(idx[i]);
  return x.tape()->record(std::move(out), {x}, [x, idx = std::move(idx)](Tape& t, const Matrix& g) {
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < idx.size(); ++i) gx.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

/// out has `rows` rows; out[idx[i]] += x[i]. Adjoint of row_gather.
inline Tensor row_scatter_add(const Tensor& x, Index idx, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(idx.size()) != x.rows()) {
    throw ShapeError("row_scatter_add: " + std::to_string(idx.size()) + " indices for " + std::to_string(x.rows()) + " rows");
  }
  detail::check_rows("row_scatter_add", idx, rows);
  const auto& xv = x.value();
  Matrix out = Matrix::Zero(rows, xv.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(idx[i]) += xv.row(static_cast<Eigen::Index>(i));
  return x.tape()->record(std::move(out), {x}, [x, idx = std::move(idx)](Tape& t, const Matrix& g) {
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < idx.size(); ++i) gx.row(static_cast<Eigen::Index>(i)) += g.row(idx[i]);
  });
}

/// Weighted sparse aggregation: out[dst[e]] += coef[e] * x[src[e]].
/// Equivalent to row_scatter_add(scale_rows(row_gather(x, src), coef), dst)
/// without the intermediate matrices.
inline Tensor propagate(const Tensor& x, Index src, Index dst, std::vector<double> coef, Eigen::Index rows) {
  if (src.size() != dst.size() || src.size() != coef.size()) throw ShapeError("propagate: edge arrays differ in length");
  detail::check_rows("propagate(src)", src, x.rows());
  detail::check_rows("propagate(dst)", dst, rows);
  const auto& xv = x.value();
  Matrix out = Matrix::Zero(rows, xv.cols());
  for (std::size_t e = 0; e < src.size(); ++e) out.row(dst[e]) += coef[e] * xv.row(src[e]);
  return x.tape()->record(std::move(out), {x},
                          [x, src = std::move(src), dst = std::move(dst), coef = std::move(coef)](Tape& t, const Matrix& g) {
                            auto& gx = t.grad_buffer(x);
                            for (std::size_t e = 0; e < src.size(); ++e) gx.row(src[e]) += coef[e] * g.row(dst[e]);
                          });
}

/// out(i, j) = x(i, cols(i, j)): per-row column gather.
inline Tensor column_select(const Tensor& x, Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cols) {
  if (cols.rows() != x.rows()) {
    throw ShapeError("column_select: index rows " + std::to_string(cols.rows()) + " vs input " + shape_str(x.rows(), x.cols()));
  }
  const auto& xv = x.value();
  Matrix out(cols.rows(), cols.cols());
  for (Eigen::Index i = 0; i < cols.rows(); ++i) {
    for (Eigen::Index j = 0; j < cols.cols(); ++j) {
      const auto c = cols(i, j);
      if (c < 0 || c >= xv.cols()) throw ShapeError("column_select: column index out of range");
      out(i, j) = xv(i, c);
    }
  }
  return x.tape()->record(std::move(out), {x}, [x, cols = std::move(cols)](Tape& t, const Matrix& g) {
    auto& gx = t.grad_buffer(x);
    for (Eigen::Index i = 0; i < cols.rows(); ++i) {
      for (Eigen::Index j = 0; j < cols.cols(); ++j) gx(i, cols(i, j)) += g(i, j);
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Tensor relu(const Tensor& x) {
  Matrix out = x.value().cwiseMax(0.0);
  return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, ((x.value().array() > 0.0).cast<double>() * g.array()).matrix());
  });
}

inline Tensor sigmoid(const Tensor& x) {
  Matrix out = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
  Tape* tape = x.tape();
  const std::size_t self = tape->size();
  return tape->record(std::move(out), {x}, [x, self](Tape& t, const Matrix& g) {
    const auto& y = t.value(self);
    t.accumulate(x, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

inline Tensor tanh(const Tensor& x) {
  Matrix out = x.value().array().tanh().matrix();
  Tape* tape = x.tape();
  const std::size_t self = tape->size();
  return tape->record(std::move(out), {x}, [x, self](Tape& t, const Matrix& g) {
    const auto& y = t.value(self);
    t.accumulate(x, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

namespace detail {

inline void softmax_rows_inplace(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

}  // namespace detail

/// Softmax along columns of each row (axis 1) or along rows of each column
/// (axis 0).
inline Tensor softmax(const Tensor& x, int axis = 1) {
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  const Eigen::Index extent = axis == 1 ? x.cols() : x.rows();
  if (extent == 0) throw SizeError("softmax over an empty axis");
  Matrix out;
  if (axis == 1) {
    out = x.value();
    detail::softmax_rows_inplace(out);
  } else {
    Matrix tr = x.value().transpose();
    detail::softmax_rows_inplace(tr);
    out = tr.transpose();
  }
  Tape* tape = x.tape();
  const std::size_t self = tape->size();
  return tape->record(std::move(out), {x}, [x, self, axis](Tape& t, const Matrix& g) {
    const auto& y = t.value(self);
    Matrix gy = (g.array() * y.array()).matrix();
    if (axis == 1) {
      Vector dots = gy.rowwise().sum();
      t.accumulate(x, gy - (y.array().colwise() * dots.array()).matrix());
    } else {
      Eigen::RowVectorXd dots = gy.colwise().sum();
      t.accumulate(x, gy - (y.array().rowwise() * dots.array()).matrix());
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

/// Column-wise sum over rows: (r x c) -> (1 x c).
inline Tensor sum_rows(const Tensor& x) {
  Matrix out = x.value().colwise().sum();
  const auto r = x.rows();
  return x.tape()->record(std::move(out), {x}, [x, r](Tape& t, const Matrix& g) {
    t.accumulate(x, g.replicate(r, 1));
  });
}

/// Column-wise mean over rows: (r x c) -> (1 x c).
inline Tensor mean_rows(const Tensor& x) {
  if (x.rows() == 0) throw SizeError("mean_rows of an empty matrix");
  const auto r = x.rows();
  Matrix out = x.value().colwise().sum() / static_cast<double>(r);
  return x.tape()->record(std::move(out), {x}, [x, r](Tape& t, const Matrix& g) {
    t.accumulate(x, (g / static_cast<double>(r)).replicate(r, 1));
  });
}

inline Tensor sum_all(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

/// Inverted dropout. rate 0 returns the input unchanged.
inline Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) return scale(x, 0.0);
  const double keep = 1.0 - rate;
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  Matrix out = (x.value().array() * mask.array()).matrix();
  return x.tape()->record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& t, const Matrix& g) {
    t.accumulate(x, (g.array() * mask.array()).matrix());
  });
}

/// Mean cross-entropy of row-wise logits against integer labels -> 1 x 1.
inline Tensor cross_entropy_logits(const Tensor& logits, std::vector<int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw ShapeError("cross_entropy_logits: " + std::to_string(labels.size()) + " labels for " +
                     shape_str(logits.rows(), logits.cols()));
  }
  if (logits.cols() == 0) throw SizeError("cross_entropy_logits with zero classes");
  Matrix probs = logits.value();
  detail::softmax_rows_inplace(probs);
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= logits.cols()) throw ShapeError("cross_entropy_logits: label out of range");
    const auto r = static_cast<Eigen::Index>(i);
    const auto& row = logits.value().row(r);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    loss += lse - row(labels[i]);
  }
  const double n = static_cast<double>(labels.size());
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  return logits.tape()->record(std::move(out), {logits},
                               [logits, probs = std::move(probs), labels = std::move(labels), n](Tape& t, const Matrix& g) {
                                 Matrix gl = probs;
                                 for (std::size_t i = 0; i < labels.size(); ++i) gl(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
                                 t.accumulate(logits, gl * (g(0, 0) / n));
                               });
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

using ScalarFn = std::function<Tensor(Tape&, std::span<const Tensor>)>;

/// Compares reverse-mode gradients of a scalar function against central
/// differences at every coordinate of every input. Returns
/// max |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
inline double grad_check(const ScalarFn& f, const std::vector<Matrix>& inputs, double eps = 1e-5) {
  auto evaluate = [&](const std::vector<Matrix>& xs, std::vector<Matrix>* grads) {
    Tape tape;
    std::vector<Tensor> vars;
    vars.reserve(xs.size());
    for (const auto& x : xs) vars.push_back(tape.variable(x));
    Tensor y = f(tape, vars);
    if (y.rows() != 1 || y.cols() != 1) throw ShapeError("grad_check: function must be scalar-valued");
    const double value = y.value()(0, 0);
    if (!std::isfinite(value)) throw NumericError("grad_check: non-finite function value");
    if (grads) {
      tape.backward(y);
      grads->clear();
      for (const auto& v : vars) grads->push_back(v.grad());
    }
    return value;
  };

  for (const auto& x : inputs) {
    if (!x.allFinite()) throw NumericError("grad_check: non-finite input");
  }
  std::vector<Matrix> analytic;
  evaluate(inputs, &analytic);

  double worst = 0.0;
  std::vector<Matrix> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!analytic[k].allFinite()) throw NumericError("grad_check: non-finite gradient");
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k].data()[i];
      probe[k].data()[i] = x0 + eps;
      const double fp = evaluate(probe, nullptr);
      probe[k].data()[i] = x0 - eps;
      const double fm = evaluate(probe, nullptr);
      probe[k].data()[i] = x0;
      const double fd = (fp - fm) / (2.0 * eps);
      const double ad = analytic[k].data()[i];
      const double denom = std::max({1.0, std::abs(ad), std::abs(fd)});
      worst = std::max(worst, std::abs(ad - fd) / denom);
    }
  }
  return worst;
}

/// Single-input convenience overload.
inline double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Matrix& x, double eps = 1e-5) {
  return grad_check([&](Tape& t, std::span<const Tensor> xs) { return f(t, xs[0]); }, std::vector<Matrix>{x}, eps);
}

}  // namespace panda::ad
