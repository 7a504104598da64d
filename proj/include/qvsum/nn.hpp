#pragma once

#include "qvsum/autograd.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace qvsum::nn {

using ag::Parameter;
using ag::Tape;
using ag::Var;

// Named parameters in registration order. Pointers stay valid for the
// lifetime of the set.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter& add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw std::invalid_argument("ParameterSet: duplicate parameter '" + name + "'");
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = std::move(init);
    p->zero_grad();
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterSet: no parameter '" + name + "'");
    return *params_[it->second];
  }
  const Parameter& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterSet: no parameter '" + name + "'");
    return *params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& p : params_)
      if (!p->value.allFinite()) return false;
    return true;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

// Glorot-uniform weight matrix (out x in).
inline Matrix glorot(Eigen::Index out, Eigen::Index in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(out, in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  return w;
}

// y = x W^T + b with W: out x in, b: 1 x out.
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng)
      : weight(&ps.add(name + ".w", glorot(out, in, rng))), bias(&ps.add(name + ".b", Matrix::Zero(1, out))) {}

  Eigen::Index in_dim() const { return weight->value.cols(); }
  Eigen::Index out_dim() const { return weight->value.rows(); }

  Var operator()(Tape& t, const Var& x) const { return ag::linear(x, t.param(*weight), t.param(*bias)); }
};

// Row-wise layer normalization with learned gain and bias.
struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, Eigen::Index dim)
      : gain(&ps.add(name + ".gain", Matrix::Ones(1, dim))), bias(&ps.add(name + ".bias", Matrix::Zero(1, dim))) {}

  Var operator()(Tape& t, const Var& x) const {
    return ag::add_row(ag::mul_row(ag::layer_norm_rows(x), t.param(*gain)), t.param(*bias));
  }
};

// Position-wise feed-forward network: GELU(x W1^T + b1) W2^T + b2.
struct FeedForward {
  Linear inner;
  Linear outer;

  FeedForward() = default;
  FeedForward(ParameterSet& ps, const std::string& name, Eigen::Index dim, Eigen::Index hidden, Rng& rng)
      : inner(ps, name + ".fc1", dim, hidden, rng), outer(ps, name + ".fc2", hidden, dim, rng) {}

  Var operator()(Tape& t, const Var& x) const { return outer(t, ag::gelu(inner(t, x))); }
};

// Two-layer perceptron with a GELU hidden layer; used for the small heads.
struct Mlp {
  Linear hidden;
  Linear out;

  Mlp() = default;
  Mlp(ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index width, Eigen::Index out_dim, Rng& rng)
      : hidden(ps, name + ".l1", in, width, rng), out(ps, name + ".l2", width, out_dim, rng) {}

  Var operator()(Tape& t, const Var& x) const { return out(t, ag::gelu(hidden(t, x))); }
};

// Elementwise sigmoid gate: x .* sigmoid(x W^T + b). W is square so the gate
// has the shape of its input.
struct HadamardGate {
  Linear gate;

  HadamardGate() = default;
  HadamardGate(ParameterSet& ps, const std::string& name, Eigen::Index dim, Rng& rng) : gate(ps, name, dim, dim, rng) {}

  Var weights(Tape& t, const Var& x) const { return ag::sigmoid(gate(t, x)); }
  Var operator()(Tape& t, const Var& x) const { return ag::hadamard(weights(t, x), x); }
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  void step(ParameterSet& ps) {
    ++steps_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < ps.size(); ++i) step_one(ps[i], c1, c2);
  }

  // Update only the listed parameters (e.g. when some are frozen).
  void step(std::span<Parameter* const> params) {
    ++steps_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(steps_));
    for (Parameter* p : params) step_one(*p, c1, c2);
  }

  long steps() const { return steps_; }
  const AdamOptions& options() const { return opts_; }

 private:
  void step_one(Parameter& p, double c1, double c2) const {
    if (p.adam_m.rows() != p.value.rows() || p.adam_m.cols() != p.value.cols()) {
      p.adam_m.setZero(p.value.rows(), p.value.cols());
      p.adam_v.setZero(p.value.rows(), p.value.cols());
    }
    p.adam_m = opts_.beta1 * p.adam_m + (1.0 - opts_.beta1) * p.grad;
    p.adam_v = opts_.beta2 * p.adam_v + (1.0 - opts_.beta2) * p.grad.cwiseProduct(p.grad);
    const Matrix step = (p.adam_m / c1).array() / ((p.adam_v / c2).array().sqrt() + opts_.epsilon);
    p.value -= opts_.learning_rate * step;
  }

  AdamOptions opts_;
  long steps_ = 0;
};

}  // namespace qvsum::nn
