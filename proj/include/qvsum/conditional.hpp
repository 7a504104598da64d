#pragma once

// Latent-variable objective for conditional learning: prior p(z), decoders
// p(x|z), p(t|z), p(y|z,t), the Gaussian posterior q(z|x,y,t) and the helper
// distributions q(t|x), q(y|x,t). Every quantity is computed per frame row.

#include "qvsum/nn.hpp"

#include <numbers>

namespace qvsum {

using ag::Tape;
using ag::Var;

inline constexpr double kProbFloor = 1e-7;
inline constexpr double kVarianceFloor = 1e-8;

inline double log_clamped(double p) { return std::log(std::max(p, kProbFloor)); }

// sum of standard-normal log densities
inline double prior_log_density(const Matrix& z) {
  return -0.5 * (z.array().square().sum() + static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi));
}

// 0.5 * sum(mu^2 + s2 - 1 - log s2)
inline double gaussian_kl(const Matrix& mu, const Matrix& sigma2) {
  if ((sigma2.array() <= 0.0).any()) throw std::domain_error("gaussian_kl: non-positive variance");
  return 0.5 * (mu.array().square() + sigma2.array() - 1.0 - sigma2.array().log()).sum();
}

inline Var gaussian_kl(const Var& mu, const Var& sigma2) {
  Var terms = ag::sub(ag::add(ag::square(mu), sigma2), ag::affine(ag::log(sigma2), 1.0, 1.0));
  return ag::scale(ag::sum(terms), 0.5);
}

// Rows of `a` where t_i = 1, rows of `b` where t_i = 0.
inline Var gate_rows(Tape& t, const std::vector<int>& tv, const Var& a, const Var& b) {
  if (static_cast<Eigen::Index>(tv.size()) != a.rows() || a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("gate_rows: shape mismatch");
  Matrix on(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const int ti = tv[static_cast<std::size_t>(i)];
    if (ti != 0 && ti != 1) throw std::invalid_argument("gate_rows: t must be 0 or 1");
    on.row(i).setConstant(ti);
  }
  Matrix off = Matrix::Ones(a.rows(), a.cols()) - on;
  return ag::add(ag::hadamard(t.constant(std::move(on)), a), ag::hadamard(t.constant(std::move(off)), b));
}

inline Matrix one_hot(const std::vector<int>& labels, int classes = kNumClasses) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw std::out_of_range("one_hot: label out of range");
    m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return m;
}

struct ConditionalDims {
  Eigen::Index feature_dim = 32;  // width of x
  Eigen::Index latent_dim = 8;
  Eigen::Index hidden_dim = 32;
};

struct ConditionalHeads {
  // generative side
  nn::Mlp f_t;      // f_theta1: z -> 1
  nn::Mlp f_y1;     // f_theta2: z -> classes (t = 1)
  nn::Mlp f_y0;     // f_theta3: z -> classes (t = 0)
  nn::Mlp f_x;      // z -> x mean
  // posterior
  nn::Linear g_trunk;  // g_phi0 over [x, onehot(y)]
  nn::Linear g_mu0, g_var0, g_mu1, g_var1;
  // helpers
  nn::Linear q_t;   // g_phi5
  nn::Linear q_y1;  // g_phi6
  nn::Linear q_y0;  // g_phi7
  ConditionalDims dims;

  ConditionalHeads() = default;
  ConditionalHeads(nn::ParameterSet& ps, const std::string& name, const ConditionalDims& d, Rng& rng)
      : f_t(ps, name + ".f_t", d.latent_dim, d.hidden_dim, 1, rng),
        f_y1(ps, name + ".f_y1", d.latent_dim, d.hidden_dim, kNumClasses, rng),
        f_y0(ps, name + ".f_y0", d.latent_dim, d.hidden_dim, kNumClasses, rng),
        f_x(ps, name + ".f_x", d.latent_dim, d.hidden_dim, d.feature_dim, rng),
        g_trunk(ps, name + ".g_trunk", d.feature_dim + kNumClasses, d.hidden_dim, rng),
        g_mu0(ps, name + ".g_mu0", d.hidden_dim, d.latent_dim, rng),
        g_var0(ps, name + ".g_var0", d.hidden_dim, d.latent_dim, rng),
        g_mu1(ps, name + ".g_mu1", d.hidden_dim, d.latent_dim, rng),
        g_var1(ps, name + ".g_var1", d.hidden_dim, d.latent_dim, rng),
        q_t(ps, name + ".q_t", d.feature_dim, 1, rng),
        q_y1(ps, name + ".q_y1", d.feature_dim, kNumClasses, rng),
        q_y0(ps, name + ".q_y0", d.feature_dim, kNumClasses, rng),
        dims(d) {}
};

// p(t = 1 | z) = sigmoid(f_theta1(z)), n x 1
inline Var intervention_prob(Tape& t, const Var& z, const ConditionalHeads& h) { return ag::sigmoid(h.f_t(t, z)); }

// p(y | z, t) = softmax(t f_theta2(z) + (1 - t) f_theta3(z)), n x classes
inline Var outcome_logits(Tape& t, const Var& z, const std::vector<int>& tv, const ConditionalHeads& h) {
  return gate_rows(t, tv, h.f_y1(t, z), h.f_y0(t, z));
}

inline Var outcome_probs(Tape& t, const Var& z, const std::vector<int>& tv, const ConditionalHeads& h) {
  return ag::softmax_rows(outcome_logits(t, z, tv, h));
}

struct PosteriorParams {
  Var mu;
  Var sigma2;
};

// Trunk over [x, onehot(y)]; means and softplus variances selected by t.
inline PosteriorParams posterior_params(Tape& t, const Var& x, const std::vector<int>& y, const std::vector<int>& tv,
                                        const ConditionalHeads& h) {
  Var trunk = ag::gelu(h.g_trunk(t, ag::concat_cols(x, t.constant(one_hot(y)))));
  Var mu = gate_rows(t, tv, h.g_mu1(t, trunk), h.g_mu0(t, trunk));
  Var var1 = ag::affine(ag::softplus(h.g_var1(t, trunk)), 1.0, kVarianceFloor);
  Var var0 = ag::affine(ag::softplus(h.g_var0(t, trunk)), 1.0, kVarianceFloor);
  return {mu, gate_rows(t, tv, var1, var0)};
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix eps(rows, cols);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
  return eps;
}

// z = mu + sqrt(sigma2) * eps
inline Var reparam_sample(Tape& t, const PosteriorParams& q, Rng& rng) {
  if ((q.sigma2.value().array() <= 0.0).any()) throw std::domain_error("reparam_sample: non-positive variance");
  Var eps = t.constant(standard_normal(q.mu.rows(), q.mu.cols(), rng));
  return ag::add(q.mu, ag::hadamard(ag::sqrt(q.sigma2), eps));
}

inline Matrix reparam_sample(const Matrix& mu, const Matrix& sigma2, std::uint64_t seed) {
  if (mu.rows() != sigma2.rows() || mu.cols() != sigma2.cols()) throw std::invalid_argument("reparam_sample: shape mismatch");
  if ((sigma2.array() <= 0.0).any()) throw std::domain_error("reparam_sample: non-positive variance");
  Rng rng(seed);
  return mu + (sigma2.array().sqrt() * standard_normal(mu.rows(), mu.cols(), rng).array()).matrix();
}

// log of a Bernoulli(sigmoid(logit)) at the observed t, clamped below.
inline Var bernoulli_log_prob(Tape& t, const Var& logit, const std::vector<int>& tv) {
  Matrix sign(logit.rows(), 1);
  for (Eigen::Index i = 0; i < sign.rows(); ++i) sign(i, 0) = tv[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
  return ag::clamp_min(ag::log_sigmoid(ag::hadamard(t.constant(std::move(sign)), logit)), std::log(kProbFloor));
}

inline Var categorical_log_prob(const Var& logits, const std::vector<int>& y) {
  return ag::clamp_min(ag::pick(ag::log_softmax_rows(logits), y), std::log(kProbFloor));
}

// sum_i log q(t_i | x_i) + log q(y_i | x_i, t_i); a quantity to maximize.
inline Var helper_log_likelihood(Tape& t, const Var& x, const std::vector<int>& tv, const std::vector<int>& y,
                                 const ConditionalHeads& h) {
  Var log_qt = bernoulli_log_prob(t, h.q_t(t, x), tv);
  Var log_qy = categorical_log_prob(gate_rows(t, tv, h.q_y1(t, x), h.q_y0(t, x)), y);
  return ag::sum(ag::add(log_qt, log_qy));
}

// Same term from given probabilities of the observed labels.
inline double helper_term(std::span<const double> q_t, std::span<const double> q_y) {
  if (q_t.size() != q_y.size()) throw std::invalid_argument("helper_term: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < q_t.size(); ++i) s += log_clamped(q_t[i]) + log_clamped(q_y[i]);
  return s;
}

// Class probabilities used at inference: q(y | x, t = 0).
inline Var helper_outcome_probs(Tape& t, const Var& x, const ConditionalHeads& h) {
  return ag::softmax_rows(h.q_y0(t, x));
}

struct ConditionalBatch {
  Var x;               // n x feature_dim
  std::vector<int> t;  // per row
  std::vector<int> y;  // per row
};

struct ObjectiveTerms {
  Var objective;  // 1 x 1, to maximize
  double helper = 0.0;
  double reconstruction = 0.0;
  double intervention = 0.0;
  double outcome = 0.0;
  double kl = 0.0;
};

// L = w * L_helper + sum_i [log p(x|z) + log p(t|z) + log p(y|t,z)] - KL(q(z|x,y,t) || p(z))
// with one reparameterized sample per row.
inline ObjectiveTerms conditional_objective(Tape& t, const ConditionalBatch& b, const ConditionalHeads& h, Rng& rng,
                                            double helper_weight = 1.0) {
  const auto n = static_cast<std::size_t>(b.x.rows());
  if (b.t.size() != n || b.y.size() != n) throw std::invalid_argument("conditional_objective: label count mismatch");
  const PosteriorParams q = posterior_params(t, b.x, b.y, b.t, h);
  Var z = reparam_sample(t, q, rng);

  Var diff = ag::sub(b.x, h.f_x(t, z));
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(b.x.value().size());
  Var recon = ag::affine(ag::scale(ag::sum(ag::square(diff)), -0.5), 1.0, log_norm);
  Var log_pt = ag::sum(bernoulli_log_prob(t, h.f_t(t, z), b.t));
  Var log_py = ag::sum(categorical_log_prob(outcome_logits(t, z, b.t, h), b.y));
  Var kl = gaussian_kl(q.mu, q.sigma2);
  Var helper = helper_log_likelihood(t, b.x, b.t, b.y, h);

  Var elbo = ag::sub(ag::add(ag::add(recon, log_pt), log_py), kl);
  ObjectiveTerms out;
  out.objective = ag::add(elbo, ag::scale(helper, helper_weight));
  out.helper = helper.scalar();
  out.reconstruction = recon.scalar();
  out.intervention = log_pt.scalar();
  out.outcome = log_py.scalar();
  out.kl = kl.scalar();
  return out;
}

}  // namespace qvsum
