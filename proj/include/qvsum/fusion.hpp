#pragma once

// Cross-modal combination: simple fusions, Hadamard visual/interactive/mutual
// attentions, top-k conditional attention and the conditional module.

#include "qvsum/qencode.hpp"

#include <numeric>

namespace qvsum {

enum class FuseMode { sum, concat, mul };

inline std::string to_string(FuseMode m) {
  switch (m) {
    case FuseMode::sum: return "sum";
    case FuseMode::concat: return "concat";
    case FuseMode::mul: return "mul";
  }
  return "?";
}

inline FuseMode parse_fuse_mode(const std::string& s) {
  if (s == "sum") return FuseMode::sum;
  if (s == "concat") return FuseMode::concat;
  if (s == "mul") return FuseMode::mul;
  throw InputError("unknown fusion mode '" + s + "' (expected sum, concat or mul)");
}

// Repeats a single row to n rows; other shapes pass through.
inline Var match_rows(const Var& a, Eigen::Index n) {
  if (a.rows() == n) return a;
  if (a.rows() == 1) return ag::broadcast_rows(a, n);
  throw std::invalid_argument("row count mismatch: " + std::to_string(a.rows()) + " vs " + std::to_string(n));
}

// Row-wise fusion of a query and visual representation. A single query row is
// broadcast over every visual row.
inline Var fuse_simple(const Var& q, const Var& v, FuseMode mode) {
  if ((mode == FuseMode::sum || mode == FuseMode::mul) && q.cols() != v.cols()) {
    throw std::invalid_argument("fuse_simple: " + to_string(mode) + " needs equal widths, got " +
                                std::to_string(q.cols()) + " and " + std::to_string(v.cols()));
  }
  const Eigen::Index n = std::max(q.rows(), v.rows());
  const Var qa = match_rows(q, n), va = match_rows(v, n);
  switch (mode) {
    case FuseMode::sum: return ag::add(qa, va);
    case FuseMode::mul: return ag::hadamard(qa, va);
    case FuseMode::concat: return ag::concat_cols(qa, va);
  }
  throw std::logic_error("fuse_simple: bad mode");
}

inline Matrix fuse_simple(const Matrix& q, const Matrix& v, FuseMode mode) {
  Tape t;
  return fuse_simple(t.constant(q), t.constant(v), mode).value();
}

// Z_va: sigmoid-gated elementwise product, same shape as phi.
inline Var visual_attention(Tape& t, const Var& phi, const nn::HadamardGate& gate) { return gate(t, phi); }

// Z_ia = Conv1x1(z_ta .* z_va); the 1x1 convolution over a vector is a linear map.
struct InteractiveAttention {
  nn::Linear mix;

  InteractiveAttention() = default;
  InteractiveAttention(nn::ParameterSet& ps, const std::string& name, Eigen::Index dim, Rng& rng)
      : mix(ps, name, dim, dim, rng) {}

  Var operator()(Tape& t, const Var& z_ta, const Var& z_va) const {
    if (z_ta.cols() != z_va.cols()) throw std::invalid_argument("interactive_attention: width mismatch");
    const Eigen::Index n = std::max(z_ta.rows(), z_va.rows());
    return mix(t, ag::hadamard(match_rows(z_ta, n), match_rows(z_va, n)));
  }
};

// Z_ma = Conv1x1(z_ta .* z_as .* z_ast)
struct MutualAttention {
  nn::Linear mix;

  MutualAttention() = default;
  MutualAttention(nn::ParameterSet& ps, const std::string& name, Eigen::Index dim, Rng& rng)
      : mix(ps, name, dim, dim, rng) {}

  static Var core(const Var& a, const Var& b, const Var& c) {
    if (a.cols() != b.cols() || a.cols() != c.cols()) throw std::invalid_argument("mutual_attention: width mismatch");
    const Eigen::Index n = std::max({a.rows(), b.rows(), c.rows()});
    return ag::hadamard(ag::hadamard(match_rows(a, n), match_rows(b, n)), match_rows(c, n));
  }

  Var operator()(Tape& t, const Var& z_ta, const Var& z_as, const Var& z_ast) const {
    return mix(t, core(z_ta, z_as, z_ast));
  }
};

using KeepMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Per row, keep the kappa largest entries; equal values keep the lower column.
inline KeepMask topk_keep(const Matrix& a, Eigen::Index kappa) {
  if (kappa < 1 || kappa > a.cols()) {
    throw std::out_of_range("topk_mask: kappa " + std::to_string(kappa) + " outside [1, " + std::to_string(a.cols()) + "]");
  }
  KeepMask keep = KeepMask::Constant(a.rows(), a.cols(), false);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(a.cols()));
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(r, i) > a(r, j); });
    for (Eigen::Index k = 0; k < kappa; ++k) keep(r, order[static_cast<std::size_t>(k)]) = true;
  }
  return keep;
}

inline Matrix topk_mask(const Matrix& a, Eigen::Index kappa) {
  const KeepMask keep = topk_keep(a, kappa);
  return keep.select(a, Matrix::Constant(a.rows(), a.cols(), kNegInf));
}

inline Eigen::Index default_kappa(Eigen::Index n) { return (n + 1) / 2; }

struct ConditionalAttentionResult {
  Var attention;  // A
  Var v_new;      // A V
  Var v_kappa;    // softmax(top_k(S)) V_new
};

// S = Q K^T / sqrt(d); A = softmax(S); V_new = A V; V_k = softmax(top_k(S)) V_new
inline ConditionalAttentionResult conditional_attention(Tape& t, const Var& tokens, Eigen::Index kappa,
                                                        const AttentionProjections& p) {
  if (!tokens.value().allFinite()) throw std::domain_error("conditional_attention: non-finite input");
  Var q = p.query(t, tokens);
  Var k = p.key(t, tokens);
  Var v = p.value(t, tokens);
  Var logits = ag::scale(ag::matmul_nt(q, k), 1.0 / std::sqrt(p.d_k));
  Var a = ag::softmax_rows(logits);
  Var v_new = ag::matmul(a, v);
  Var sparse = ag::softmax_rows(ag::mask_fill(logits, topk_keep(logits.value(), kappa)));
  return {a, v_new, ag::matmul(sparse, v_new)};
}

// X_mul = FC(concat(TextAtten(FFN(LayerNorm(V_k))), VisualAtten(video)))
// The pooled text vector is repeated for every video row.
struct ConditionalModule {
  nn::LayerNorm norm;
  nn::FeedForward ffn;
  nn::HadamardGate text_gate;
  nn::HadamardGate visual_gate;
  nn::Linear fc;

  ConditionalModule() = default;
  ConditionalModule(nn::ParameterSet& ps, const std::string& name, Eigen::Index text_dim, Eigen::Index video_dim,
                    Eigen::Index ffn_dim, Eigen::Index out_dim, Rng& rng)
      : norm(ps, name + ".ln", text_dim),
        ffn(ps, name + ".ffn", text_dim, ffn_dim, rng),
        text_gate(ps, name + ".text_gate", text_dim, rng),
        visual_gate(ps, name + ".visual_gate", video_dim, rng),
        fc(ps, name + ".fc", text_dim + video_dim, out_dim, rng) {}

  Var text_branch(Tape& t, const Var& v_kappa) const {
    return text_attention(t, ffn(t, norm(t, v_kappa)), text_gate);
  }

  Var operator()(Tape& t, const Var& v_kappa, const Var& video) const {
    Var z_ta = text_branch(t, v_kappa);
    Var z_va = visual_attention(t, video, visual_gate);
    return fc(t, ag::concat_cols(match_rows(z_ta, z_va.rows()), z_va));
  }
};

}  // namespace qvsum
