#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace qvsum;

TEST(Vocab, FirstOccurrenceOrder) {
  const Vocab v = build_vocab(std::vector<std::string>{"a b", "b c"});
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.id("a"), 0);
  EXPECT_EQ(v.id("b"), 1);
  EXPECT_EQ(v.id("c"), 2);
  EXPECT_EQ(build_vocab(std::vector<std::string>{"x"}).tokens(), (std::vector<std::string>{"x"}));
  EXPECT_EQ(build_vocab(std::vector<std::string>{"a a a"}).size(), 1u);
  EXPECT_EQ(vocab_from_json(Json::parse(to_json(v).dump())), v);
}

TEST(Bow, Counts) {
  const Vocab v = build_vocab(std::vector<std::string>{"a b c"});
  EXPECT_EQ(bow_encode("a c c", v), (RowVector(3) << 1, 0, 2).finished());
  EXPECT_EQ(bow_encode("", v), RowVector::Zero(3));
  EXPECT_EQ(bow_encode("z z", v), RowVector::Zero(3));
  EXPECT_EQ(bow_encode("a b", v) + bow_encode("c a", v), bow_encode("a b c a", v));
}

TEST(Embedding, AdditiveDecomposition) {
  nn::ParameterSet ps;
  Rng rng(1);
  TokenEmbedding emb(ps, "e", 5, 8, 6, rng);
  const std::vector<int> ids{3, 3, 1};
  {
    emb.table->value.setZero();
    ag::Tape t;
    EXPECT_EQ(embed_tokens(t, ids, emb).value(), emb.positions.topRows(3));
  }
  Rng r2(2);
  emb.table->value = oracle::random_matrix(8, 5, r2);
  const Matrix saved = emb.positions;
  emb.positions.setZero();
  {
    ag::Tape t;
    const Matrix x = embed_tokens(t, ids, emb).value();
    for (int i = 0; i < 3; ++i) EXPECT_EQ(Matrix(x.row(i).transpose()), Matrix(emb.table->value.col(ids[static_cast<std::size_t>(i)])));
  }
  emb.positions = saved;
  ag::Tape t;
  const Matrix x = embed_tokens(t, ids, emb).value();
  EXPECT_LT((x.row(0) - x.row(1) - (saved.row(0) - saved.row(1))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Embedding, Errors) {
  nn::ParameterSet ps;
  Rng rng(1);
  TokenEmbedding emb(ps, "e", 5, 4, 3, rng);
  ag::Tape t;
  EXPECT_THROW(embed_tokens(t, std::vector<int>{5}, emb), std::out_of_range);
  EXPECT_THROW(embed_tokens(t, std::vector<int>{0, 1, 2, 3}, emb), std::length_error);
}

TEST(MaskedSelfAttention, SingleTokenReturnsValue) {
  nn::ParameterSet ps;
  Rng rng(3);
  AttentionProjections p(ps, "a", 6, 4, rng);
  const Matrix x = oracle::random_matrix(1, 6, rng);
  ag::Tape t;
  const auto r = masked_self_attention(t, t.constant(x), p);
  EXPECT_LT((r.output.value() - p.value(t, t.constant(x)).value()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MaskedSelfAttention, RowsAreCausalProbabilities) {
  nn::ParameterSet ps;
  Rng rng(4);
  AttentionProjections p(ps, "a", 6, 4, rng);
  for (Eigen::Index n : {2, 5, 9}) {
    ag::Tape t;
    const Matrix w = masked_self_attention(t, t.constant(oracle::random_matrix(n, 6, rng)), p).weights.value();
    EXPECT_EQ(w(0, 0), 1.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-6);
      EXPECT_GE(w.row(i).minCoeff(), 0.0);
      for (Eigen::Index j = i + 1; j < n; ++j) EXPECT_EQ(w(i, j), 0.0);
    }
  }
}

TEST(MaskedSelfAttention, MatchesLoopOracle) {
  nn::ParameterSet ps;
  Rng rng(5);
  AttentionProjections p(ps, "a", 6, 5, rng);
  for (int k = 0; k < 3; ++k) ps[static_cast<std::size_t>(2 * k + 1)].value = oracle::random_matrix(1, 5, rng);
  const Matrix x = oracle::random_matrix(4, 6, rng);
  ag::Tape t;
  const Matrix z = masked_self_attention(t, t.constant(x), p).output.value();
  EXPECT_LT((z - oracle::causal_attention(x, p)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(MaskedSelfAttention, NonFiniteInputThrows) {
  nn::ParameterSet ps;
  Rng rng(6);
  AttentionProjections p(ps, "a", 2, 2, rng);
  Matrix x = Matrix::Zero(2, 2);
  x(1, 0) = std::numeric_limits<double>::quiet_NaN();
  ag::Tape t;
  EXPECT_THROW(masked_self_attention(t, t.constant(x), p), std::domain_error);
}

TEST(MaskedSelfAttention, CausalityExact) {
  nn::ParameterSet ps;
  Rng rng(7);
  AttentionProjections p(ps, "a", 4, 4, rng);
  const Matrix x = oracle::random_matrix(5, 4, rng);
  Matrix y = x;
  y.row(3) += oracle::random_matrix(1, 4, rng);
  ag::Tape t;
  const Matrix a = masked_self_attention(t, t.constant(x), p).output.value();
  const Matrix b = masked_self_attention(t, t.constant(y), p).output.value();
  EXPECT_EQ(a.topRows(3), b.topRows(3));
  EXPECT_NE(a.row(3), b.row(3));
}

TEST(DecoderBlock, ConstantOutputWithZeroOuterWeights) {
  nn::ParameterSet ps;
  Rng rng(8);
  DecoderBlock b(ps, "d", 6, 4, 8, rng);
  b.ffn.outer.weight->value.setZero();
  b.ffn.outer.bias->value = (Matrix(1, 4) << 0.5, -1, 2, 0).finished();
  ag::Tape t;
  const Matrix f = decoder_block(t, t.constant(oracle::random_matrix(3, 6, rng)), b).value();
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_EQ(Matrix(f.row(i)), b.ffn.outer.bias->value);
}

TEST(DecoderBlock, GradientAndCausality) {
  nn::ParameterSet ps;
  Rng rng(9);
  DecoderBlock b(ps, "d", 5, 6, 8, rng);
  const Matrix x = oracle::random_matrix(4, 5, rng);
  const double err = oracle::input_gradient_error(x, [&](ag::Tape& t, ag::Var v) { return oracle::probe(t, decoder_block(t, v, b)); });
  EXPECT_LT(err, 1e-4);
  Matrix y = x;
  y.row(2).array() += 0.7;
  ag::Tape t;
  const Matrix fa = decoder_block(t, t.constant(x), b).value();
  const Matrix fb = decoder_block(t, t.constant(y), b).value();
  EXPECT_LE((fa.topRows(2) - fb.topRows(2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(TextAttention, GateLimits) {
  nn::ParameterSet ps;
  Rng rng(10);
  nn::HadamardGate gate(ps, "g", 4, rng);
  const Matrix f = oracle::random_matrix(3, 4, rng);
  ag::Tape t;
  gate.gate.weight->value.setZero();
  gate.gate.bias->value.setConstant(50.0);
  EXPECT_LT((text_attention(t, t.constant(f), gate).value() - f.colwise().mean()).cwiseAbs().maxCoeff(), 1e-12);
  gate.gate.bias->value.setConstant(-50.0);
  ag::Tape t2;
  EXPECT_LT(text_attention(t2, t2.constant(f), gate).value().cwiseAbs().maxCoeff(), 1e-12);
  gate.gate.bias->value.setZero();
  const Matrix one = f.topRows(1);
  ag::Tape t3;
  EXPECT_LT((text_attention(t3, t3.constant(one), gate).value() - gate(t3, t3.constant(one)).value()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TextEncoder, DeterministicShape) {
  nn::ParameterSet ps;
  Rng rng(11);
  EncoderConfig cfg;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 8;
  cfg.ffn_dim = 16;
  TextEncoder enc(ps, "enc", 6, cfg, rng);
  const std::vector<int> ids{1, 4, 2};
  ag::Tape t;
  const Matrix a = enc(t, ids).value();
  EXPECT_EQ(a.rows(), 3);
  EXPECT_EQ(a.cols(), 8);
  EXPECT_EQ(a, enc(t, ids).value());
  EXPECT_THROW(enc(t, std::vector<int>{}), std::invalid_argument);
}
