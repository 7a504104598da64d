#pragma once

// Query encoders: the bag-of-words controller and the contextualized encoder
// (a stack of causally masked decoder blocks followed by textual attention).

#include "qvsum/ingest.hpp"
#include "qvsum/nn.hpp"

#include <unordered_map>

namespace qvsum {

using ag::Tape;
using ag::Var;

// Dense token ids in first-occurrence order.
class Vocab {
 public:
  Vocab() = default;

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<int> id(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  int add(const std::string& token) {
    auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

inline Vocab build_vocab(std::span<const std::string> queries) {
  if (queries.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  Vocab v;
  for (const auto& q : queries)
    for (const auto& tok : tokenize(q)) v.add(tok);
  return v;
}

inline Vocab build_vocab(const std::vector<std::string>& queries) {
  return build_vocab(std::span<const std::string>(queries));
}

// {"token": id, ...} in id order.
inline OrderedJson to_json(const Vocab& v) {
  OrderedJson j = OrderedJson::object();
  for (std::size_t i = 0; i < v.size(); ++i) j[v.tokens()[i]] = i;
  return j;
}

inline Vocab vocab_from_json(const Json& j) {
  if (!j.is_object()) throw InputError("vocab: expected an object");
  std::vector<std::string> by_id(j.size());
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto id = it.value().get<std::size_t>();
    if (id >= by_id.size() || !by_id[id].empty()) throw InputError("vocab: ids are not dense");
    by_id[id] = it.key();
  }
  Vocab v;
  for (const auto& t : by_id) v.add(t);
  return v;
}

// Count vector (1 x V); out-of-vocabulary tokens are ignored.
inline RowVector bow_encode(const std::string& query, const Vocab& vocab) {
  RowVector out = RowVector::Zero(static_cast<Eigen::Index>(vocab.size()));
  for (const auto& tok : tokenize(query))
    if (auto id = vocab.id(tok)) out(*id) += 1.0;
  return out;
}

// In-vocabulary token ids in query order.
inline std::vector<int> encode_ids(std::span<const std::string> tokens, const Vocab& vocab) {
  std::vector<int> ids;
  for (const auto& tok : tokens)
    if (auto id = vocab.id(tok)) ids.push_back(*id);
  return ids;
}

// Fixed sinusoidal position table (max_len x dim).
inline Matrix sinusoidal_positions(std::size_t max_len, std::size_t dim) {
  Matrix p(static_cast<Eigen::Index>(max_len), static_cast<Eigen::Index>(dim));
  for (std::size_t pos = 0; pos < max_len; ++pos)
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      p(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(i)) =
          i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  return p;
}

struct TokenEmbedding {
  ag::Parameter* table = nullptr;  // E x V
  Matrix positions;                // max_len x E

  TokenEmbedding() = default;
  TokenEmbedding(nn::ParameterSet& ps, const std::string& name, std::size_t vocab_size, std::size_t dim,
                 std::size_t max_len, Rng& rng) {
    Matrix w(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(vocab_size));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 0.1 * rng.normal();
    table = &ps.add(name + ".table", std::move(w));
    positions = sinusoidal_positions(max_len, dim);
  }

  std::size_t vocab_size() const { return static_cast<std::size_t>(table->value.cols()); }
  std::size_t max_len() const { return static_cast<std::size_t>(positions.rows()); }
};

// x_n = W_e onehot(k_n) + P[n]  ->  N x E
inline Var embed_tokens(Tape& t, std::span<const int> ids, const TokenEmbedding& emb) {
  if (ids.size() > emb.max_len()) {
    throw std::length_error("embed_tokens: " + std::to_string(ids.size()) + " tokens exceed max_len " +
                            std::to_string(emb.max_len()));
  }
  const auto n = static_cast<Eigen::Index>(ids.size());
  Matrix onehot = Matrix::Zero(n, static_cast<Eigen::Index>(emb.vocab_size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || static_cast<std::size_t>(id) >= emb.vocab_size()) throw std::out_of_range("embed_tokens: token id out of range");
    onehot(i, id) = 1.0;
  }
  Var tokens = ag::matmul_nt(t.constant(std::move(onehot)), t.param(*emb.table));
  return ag::add(tokens, t.constant(emb.positions.topRows(n)));
}

struct AttentionProjections {
  nn::Linear query;
  nn::Linear key;
  nn::Linear value;
  double d_k = 1.0;

  AttentionProjections() = default;
  AttentionProjections(nn::ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng)
      : query(ps, name + ".q", in, out, rng),
        key(ps, name + ".k", in, out, rng),
        value(ps, name + ".v", in, out, rng),
        d_k(static_cast<double>(out)) {}
};

struct AttentionResult {
  Var output;   // N x H
  Var weights;  // N x N, rows are probability vectors
};

// keep(i, j) = j <= i
inline Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> causal_keep(Eigen::Index n) {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> keep(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) keep(i, j) = j <= i;
  return keep;
}

// softmax(m(Q K^T / sqrt(d_k))) V with the causal mask m.
inline AttentionResult masked_self_attention(Tape& t, const Var& x, const AttentionProjections& p) {
  if (!x.value().allFinite()) throw std::domain_error("masked_self_attention: non-finite input");
  Var q = p.query(t, x);
  Var k = p.key(t, x);
  Var v = p.value(t, x);
  Var logits = ag::scale(ag::matmul_nt(q, k), 1.0 / std::sqrt(p.d_k));
  Var weights = ag::softmax_rows(ag::mask_fill(logits, causal_keep(x.rows())));
  return {ag::matmul(weights, v), weights};
}

struct DecoderBlock {
  AttentionProjections attention;
  nn::LayerNorm norm;
  nn::FeedForward ffn;

  DecoderBlock() = default;
  DecoderBlock(nn::ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index hidden,
               Eigen::Index ffn_hidden, Rng& rng)
      : attention(ps, name + ".attn", in, hidden, rng),
        norm(ps, name + ".ln", hidden),
        ffn(ps, name + ".ffn", hidden, ffn_hidden, rng) {}
};

// F = FFN(LayerNorm(MaskAtten(X)))
inline Var decoder_block(Tape& t, const Var& x, const DecoderBlock& block) {
  return block.ffn(t, block.norm(t, masked_self_attention(t, x, block.attention).output));
}

struct EncoderConfig {
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t num_blocks = 2;
  std::size_t max_len = 16;
  std::size_t ffn_dim = 128;
};

class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(nn::ParameterSet& ps, const std::string& name, std::size_t vocab_size, const EncoderConfig& cfg, Rng& rng)
      : embedding_(ps, name + ".embed", vocab_size, cfg.embed_dim, cfg.max_len, rng) {
    if (cfg.num_blocks == 0) throw std::invalid_argument("TextEncoder: need at least one decoder block");
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
      const auto in = static_cast<Eigen::Index>(b == 0 ? cfg.embed_dim : cfg.hidden_dim);
      blocks_.emplace_back(ps, name + ".block" + std::to_string(b), in, static_cast<Eigen::Index>(cfg.hidden_dim),
                           static_cast<Eigen::Index>(cfg.ffn_dim), rng);
    }
  }

  // Contextual rows F (N x H).
  Var operator()(Tape& t, std::span<const int> ids) const {
    if (ids.empty()) throw std::invalid_argument("TextEncoder: empty token sequence");
    Var x = embed_tokens(t, ids, embedding_);
    for (const auto& b : blocks_) x = decoder_block(t, x, b);
    return x;
  }

  const TokenEmbedding& embedding() const { return embedding_; }
  TokenEmbedding& embedding() { return embedding_; }
  const std::vector<DecoderBlock>& blocks() const { return blocks_; }

 private:
  TokenEmbedding embedding_;
  std::vector<DecoderBlock> blocks_;
};

// Z_ta: mean over the first `valid_len` rows of the gated contextual matrix.
inline Var text_attention(Tape& t, const Var& f, const nn::HadamardGate& gate, std::size_t valid_len) {
  if (valid_len == 0 || static_cast<Eigen::Index>(valid_len) > f.rows())
    throw std::out_of_range("text_attention: valid length out of range");
  Var gated = gate(t, f);
  return ag::mean_rows(ag::slice_rows(gated, 0, static_cast<Eigen::Index>(valid_len)));
}

inline Var text_attention(Tape& t, const Var& f, const nn::HadamardGate& gate) {
  return text_attention(t, f, gate, static_cast<std::size_t>(f.rows()));
}

}  // namespace qvsum
