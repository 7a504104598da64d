#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation eagerly: values are computed when an op is
// created and a backward closure is stored if any input requires a gradient.
// Calling Tape::backward on a 1x1 result walks the nodes in reverse creation
// order, which is a valid topological order because inputs always precede the
// ops that consume them.

#include "qvsum/common.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace qvsum::ag {

// A trainable tensor living outside any tape. Adam moments ride along.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Matrix grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, {}); }

  // A leaf whose gradient is retained and can be read after backward().
  Var input(Matrix value) { return push(std::move(value), true, {}); }

  // Leaf bound to a Parameter; backward() adds its gradient into p.grad.
  // Repeated calls with the same parameter reuse one node.
  Var param(Parameter& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
    Var v = push(p.value, true, {});
    param_ids_.emplace(&p, v.id());
    bindings_.emplace_back(v.id(), &p);
    return v;
  }

  Var make(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) {
      if (&p.tape() != this) throw std::invalid_argument("autograd: mixing vars from different tapes");
      needs = needs || nodes_[p.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  void backward(const Var& root) {
    if (root.value().size() != 1) throw std::invalid_argument("autograd: backward needs a 1x1 root");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    accumulate(root.id(), Matrix::Ones(1, 1));
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, n.grad);
    }
    for (auto& [id, p] : bindings_) {
      const Matrix& g = nodes_[id].grad;
      if (g.size() == 0) continue;
      if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) p->zero_grad();
      p->grad += g;
    }
  }

  void accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  Matrix grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  std::vector<std::pair<std::size_t, Parameter*>> bindings_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;

  friend class Var;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline Matrix Var::grad() const { return tape_->grad(id_); }
inline double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::invalid_argument("autograd: scalar() on a non-1x1 var");
  return v(0, 0);
}

namespace detail {

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
  Matrix y = a.value().unaryExpr(f);
  const std::size_t ia = a.id();
  const std::size_t iy = a.tape().size();
  return a.tape().make(std::move(y), {a}, [ia, iy, df](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(ia);
    const Matrix& y = t.value(iy);
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) d.data()[i] = df(x.data()[i], y.data()[i]);
    t.accumulate(ia, g.cwiseProduct(d));
  });
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  return a.tape().make(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  const auto ia = a.id(), ib = b.id();
  return a.tape().make(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

inline Var hadamard(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "hadamard");
  const auto ia = a.id(), ib = b.id();
  return a.tape().make(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

// y = scale * x + shift, elementwise.
inline Var affine(const Var& a, double scale, double shift = 0.0) {
  const auto ia = a.id();
  Matrix y = (a.value().array() * scale + shift).matrix();
  return a.tape().make(std::move(y), {a}, [ia, scale](Tape& t, const Matrix& g) { t.accumulate(ia, g * scale); });
}

inline Var scale(const Var& a, double s) { return affine(a, s, 0.0); }

// a (n x m) + row (1 x m) broadcast over rows.
inline Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: row shape mismatch");
  const auto ia = a.id(), ir = row.id();
  Matrix y = a.value().rowwise() + RowVector(row.value().row(0));
  return a.tape().make(std::move(y), {a, row}, [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ir, g.colwise().sum());
  });
}

// a (n x m) .* row (1 x m) broadcast over rows.
inline Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("mul_row: row shape mismatch");
  const auto ia = a.id(), ir = row.id();
  Matrix y = a.value().array().rowwise() * row.value().row(0).array();
  return a.tape().make(std::move(y), {a, row}, [ia, ir](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(ia);
    const Matrix& rv = t.value(ir);
    t.accumulate(ia, (g.array().rowwise() * rv.row(0).array()).matrix());
    t.accumulate(ir, g.cwiseProduct(av).colwise().sum());
  });
}

// Repeat a 1 x m row n times.
inline Var broadcast_rows(const Var& row, Eigen::Index n) {
  if (row.rows() != 1) throw std::invalid_argument("broadcast_rows: expects a row");
  const auto ir = row.id();
  Matrix y = row.value().replicate(n, 1);
  return row.tape().make(std::move(y), {row}, [ir](Tape& t, const Matrix& g) { t.accumulate(ir, g.colwise().sum()); });
}

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  const auto ia = a.id(), ib = b.id();
  return a.tape().make(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  const auto ia = a.id(), ib = b.id();
  return a.tape().make(a.value() * b.value().transpose(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib));
    if (t.requires_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
  });
}

// x (n x in), weight (out x in), bias (1 x out) -> n x out
inline Var linear(const Var& x, const Var& weight, const Var& bias) { return add_row(matmul_nt(x, weight), bias); }

inline Var sigmoid(const Var& a) {
  return detail::unary(a, [](double x) { return detail::sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(const Var& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var softplus(const Var& a) {
  return detail::unary(a, [](double x) { return detail::softplus(x); },
                       [](double x, double) { return detail::sigmoid(x); });
}

// log(sigmoid(x)) without overflow.
inline Var log_sigmoid(const Var& a) {
  return detail::unary(a, [](double x) { return -detail::softplus(-x); },
                       [](double x, double) { return detail::sigmoid(-x); });
}

// Exact (erf) GELU.
inline Var gelu(const Var& a) {
  return detail::unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

inline Var exp(const Var& a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var sqrt(const Var& a) {
  return detail::unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

inline Var square(const Var& a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// max(x, lo); gradient passes only where x > lo.
inline Var clamp_min(const Var& a, double lo) {
  return detail::unary(a, [lo](double x) { return std::max(x, lo); },
                       [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

// Row-wise softmax. Entries equal to -inf receive exactly zero mass.
inline Var softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    if (!std::isfinite(m)) throw std::invalid_argument("softmax_rows: row without a finite entry");
    double total = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double e = x(r, c) == kNegInf ? 0.0 : std::exp(x(r, c) - m);
      y(r, c) = e;
      total += e;
    }
    y.row(r) /= total;
  }
  const auto ia = a.id();
  const auto iy = a.tape().size();
  return a.tape().make(std::move(y), {a}, [ia, iy](Tape& t, const Matrix& g) {
    const Matrix& s = t.value(iy);
    const Vector dot = g.cwiseProduct(s).rowwise().sum();
    t.accumulate(ia, s.cwiseProduct(g - dot.replicate(1, g.cols())));
  });
}

inline Var log_softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    y.row(r) = x.row(r).array() - lse;
  }
  const auto ia = a.id();
  const auto iy = a.tape().size();
  return a.tape().make(std::move(y), {a}, [ia, iy](Tape& t, const Matrix& g) {
    const Matrix s = t.value(iy).array().exp().matrix();
    const Vector total = g.rowwise().sum();
    t.accumulate(ia, g - s.cwiseProduct(total.replicate(1, g.cols())));
  });
}

// Per-row standardization (no gain/bias): (x - mean) / sqrt(var + eps).
inline Var layer_norm_rows(const Var& a, double eps = 1e-5) {
  const Matrix& x = a.value();
  const Eigen::Index m = x.cols();
  Matrix y(x.rows(), m);
  Vector inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    y.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  const auto ia = a.id();
  const auto iy = a.tape().size();
  return a.tape().make(std::move(y), {a}, [ia, iy, inv_std, m](Tape& t, const Matrix& g) {
    const Matrix& xhat = t.value(iy);
    Matrix dx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double mg = g.row(r).mean();
      const double mgx = g.row(r).cwiseProduct(xhat.row(r)).sum() / static_cast<double>(m);
      dx.row(r) = inv_std(r) * (g.row(r).array() - mg - xhat.row(r).array() * mgx);
    }
    t.accumulate(ia, dx);
  });
}

// Column-wise mean over rows: n x m -> 1 x m.
inline Var mean_rows(const Var& a) {
  const auto ia = a.id();
  const auto n = a.rows();
  if (n == 0) throw std::invalid_argument("mean_rows: empty input");
  return a.tape().make(a.value().colwise().mean(), {a}, [ia, n](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g / static_cast<double>(n)).replicate(n, 1));
  });
}

inline Var sum(const Var& a) {
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  return a.tape().make(std::move(y), {a}, [ia, r, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

// Row sums: n x m -> n x 1.
inline Var row_sum(const Var& a) {
  const auto ia = a.id();
  const auto c = a.cols();
  return a.tape().make(a.value().rowwise().sum(), {a}, [ia, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.replicate(1, c));
  });
}

inline Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row count mismatch");
  Matrix y(a.rows(), a.cols() + b.cols());
  y << a.value(), b.value();
  const auto ia = a.id(), ib = b.id();
  const auto ca = a.cols(), cb = b.cols();
  return a.tape().make(std::move(y), {a, b}, [ia, ib, ca, cb](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.leftCols(ca));
    t.accumulate(ib, g.rightCols(cb));
  });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows: range out of bounds");
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return a.tape().make(a.value().middleRows(start, count), {a}, [ia, r, c, start, count](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(r, c);
    full.middleRows(start, count) = g;
    t.accumulate(ia, full);
  });
}

// out.row(i) = a.row(index[i]); gradients scatter-add back.
inline Var gather_rows(const Var& a, std::vector<Eigen::Index> index) {
  Matrix y(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) throw std::out_of_range("gather_rows: index out of range");
    y.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return a.tape().make(std::move(y), {a}, [ia, r, c, index = std::move(index)](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < index.size(); ++i) full.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(ia, full);
  });
}

// out(i) = a(i, labels[i]) as an n x 1 column.
inline Var pick(const Var& a, std::vector<int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != a.rows()) throw std::invalid_argument("pick: label count mismatch");
  Matrix y(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l < 0 || l >= a.cols()) throw std::out_of_range("pick: label out of range");
    y(i, 0) = a.value()(i, l);
  }
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return a.tape().make(std::move(y), {a}, [ia, r, c, labels = std::move(labels)](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(r, c);
    for (Eigen::Index i = 0; i < r; ++i) full(i, labels[static_cast<std::size_t>(i)]) = g(i, 0);
    t.accumulate(ia, full);
  });
}

// keep(i, j) ? a(i, j) : -inf. Masked entries get no gradient.
inline Var mask_fill(const Var& a, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& keep) {
  if (keep.rows() != a.rows() || keep.cols() != a.cols()) throw std::invalid_argument("mask_fill: mask shape mismatch");
  Matrix y = keep.select(a.value(), Matrix::Constant(a.rows(), a.cols(), kNegInf));
  const auto ia = a.id();
  return a.tape().make(std::move(y), {a}, [ia, keep](Tape& t, const Matrix& g) {
    t.accumulate(ia, keep.select(g, Matrix::Zero(g.rows(), g.cols())));
  });
}

inline Var transpose(const Var& a) {
  const auto ia = a.id();
  return a.tape().make(a.value().transpose(), {a}, [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

}  // namespace qvsum::ag
