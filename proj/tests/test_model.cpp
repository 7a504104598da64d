#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace qvsum;

namespace {

Vocab toy_vocab() { return build_vocab(std::vector<std::string>{"dog beach car night"}); }

ModelConfig toy_config(Variant v) {
  ModelConfig c = default_model_config(v);
  c.embed_dim = 8;
  c.hidden_dim = 8;
  c.ffn_dim = 12;
  c.fc_dim = 8;
  c.latent_dim = 3;
  c.max_query_len = 6;
  c.learning_rate = 1e-2;
  c.epochs = 3;
  c.pretrain_learning_rate = 1e-2;
  c.pretrain_epochs = 3;
  return c;
}

VideoInput toy_input(const std::string& id, std::size_t frames, const std::string& query, std::uint64_t seed,
                     Eigen::Index d2 = 8, Eigen::Index d3 = 6) {
  Rng rng(seed);
  VideoInput v;
  v.video_id = id;
  v.original_len = frames;
  v.query = tokenize(query);
  v.frames = oracle::random_matrix(static_cast<Eigen::Index>(frames), d2, rng);
  const auto spans = segment_spans(frames, 1);
  v.segments = oracle::random_matrix(static_cast<Eigen::Index>(spans.size()), d3, rng);
  v.segment_means.resize(v.segments.rows(), d2);
  v.frame_segments.resize(static_cast<Eigen::Index>(frames), d3);
  for (std::size_t i = 0; i < frames; ++i) {
    v.labels.push_back(static_cast<int>(rng.index(4)));
    v.frame_segments.row(static_cast<Eigen::Index>(i)) = v.segments.row(static_cast<Eigen::Index>(segment_of(i, 1)));
  }
  for (std::size_t s = 0; s < spans.size(); ++s) {
    v.segment_means.row(static_cast<Eigen::Index>(s)) =
        v.frames.middleRows(static_cast<Eigen::Index>(spans[s].begin), static_cast<Eigen::Index>(spans[s].size())).colwise().mean();
    double mean = 0.0;
    for (std::size_t i = spans[s].begin; i < spans[s].end; ++i) mean += v.labels[i];
    v.segment_labels.push_back(segment_to_class(mean / static_cast<double>(spans[s].size())));
  }
  v.gold = v.labels;
  return v;
}

std::vector<VideoInput> toy_set() {
  return {toy_input("a", 6, "dog beach", 1), toy_input("b", 6, "car night", 2), toy_input("c", 5, "beach car", 3)};
}

}  // namespace

TEST(CrossEntropy, Examples) {
  EXPECT_NEAR(cross_entropy(RowVector::Zero(4), 2), std::log(4.0), 1e-12);
  RowVector l(4);
  l << 10, 0, 0, 0;
  EXPECT_NEAR(cross_entropy(l, 0), 1.36e-4, 1e-6);
  RowVector shifted = l.array() + 123.4;
  EXPECT_NEAR(cross_entropy(shifted, 3), cross_entropy(l, 3), 1e-9);
  EXPECT_GE(cross_entropy(l, 0), 0.0);
  EXPECT_THROW(cross_entropy(l, 4), std::out_of_range);
  ag::Tape t;
  EXPECT_NEAR(cross_entropy(t.constant(Matrix::Zero(3, 4)), {0, 1, 3}).scalar(), std::log(4.0), 1e-12);
}

TEST(ArgmaxRows, LowestClassWinsTies) {
  Matrix m(2, 4);
  m << 1, 3, 3, 0, 2, 2, 2, 2;
  EXPECT_EQ(argmax_rows(m), (std::vector<int>{1, 0}));
}

TEST(ModelConfig, JsonRoundTripAndValidation) {
  const ModelConfig c = toy_config(Variant::gpt2mvs);
  const ModelConfig back = model_config_from_json(Json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_THROW(model_config_from_json(Json{{"varient", "queryvs"}}), InputError);
  EXPECT_THROW(model_config_from_json(Json{{"variant", "bert"}}), InputError);
  EXPECT_THROW(model_config_from_json(Json{{"epochs", 0}}), InputError);
  EXPECT_EQ(default_model_config(Variant::gpt2mvs).epochs, 10u);
  EXPECT_EQ(default_model_config(Variant::conditional).learning_rate, 1e-6);
  EXPECT_EQ(default_model_config(Variant::pseudo_pretrain).pretrain_learning_rate, 1e-7);
}

TEST(QueryVs, ShapeAndQuerySensitivity) {
  for (FuseMode mode : {FuseMode::mul, FuseMode::concat, FuseMode::sum}) {
    ModelConfig c = toy_config(Variant::queryvs);
    c.fusion_mode = mode;
    Model m(c, toy_vocab(), 8, 6, 5);
    VideoInput a = toy_input("v", 7, "dog beach", 9);
    VideoInput b = a;
    b.query = tokenize("car night");
    const Matrix la = m.predict(a).logits, lb = m.predict(b).logits;
    EXPECT_EQ(la.rows(), 7);
    EXPECT_EQ(la.cols(), 4);
    if (mode != FuseMode::sum) EXPECT_GT((la - lb).cwiseAbs().maxCoeff(), 0.0) << to_string(mode);
  }
}

TEST(QueryVs, SumWithZeroQueryIsQueryFree) {
  ModelConfig c = toy_config(Variant::queryvs);
  c.fusion_mode = FuseMode::sum;
  Model m(c, toy_vocab(), 8, 6, 5);
  m.params().at("query.proj.w").value.setZero();
  m.params().at("query.proj.b").value.setZero();
  const VideoInput v = toy_input("v", 5, "dog", 4);
  const Matrix want = oracle::linear(v.frames, m.params().at("head.w").value, m.params().at("head.b").value);
  EXPECT_LT((m.predict(v).logits - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gpt2mvs, ShapeAndPaddingInvariance) {
  Model m(toy_config(Variant::gpt2mvs), toy_vocab(), 8, 6, 6);
  EXPECT_EQ(m.predict(toy_input("v", 9, "dog car", 1)).logits.rows(), 9);
  nn::ParameterSet ps;
  Rng rng(2);
  TextEncoder enc(ps, "e", 4, {8, 8, 2, 6, 12}, rng);
  nn::HadamardGate gate(ps, "g", 8, rng);
  ag::Tape t;
  const Matrix base = text_attention(t, enc(t, std::vector<int>{1, 2}), gate).value();
  const Matrix padded = text_attention(t, enc(t, std::vector<int>{1, 2, 0, 0}), gate, 2).value();
  EXPECT_LT((base - padded).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, FiniteDifferenceThroughEveryVariant) {
  const VideoInput v = toy_input("v", 4, "dog beach car", 3);
  for (Variant var : {Variant::queryvs, Variant::gpt2mvs, Variant::conditional, Variant::pseudo_pretrain}) {
    Model m(toy_config(var), toy_vocab(), 8, 6, 7);
    auto loss = [&](ag::Tape& t) {
      Rng rng(1);
      return m.loss(t, v, rng, false);
    };
    for (std::size_t i = 0; i < m.params().size(); i += 3) {
      auto& p = m.params()[i];
      if (p.name.rfind("seg_head", 0) == 0) continue;
      EXPECT_LT(oracle::param_gradient_error(p, loss), 1e-3) << to_string(var) << " " << p.name;
    }
  }
}

TEST(Model, TokenIdsValidation) {
  Model m(toy_config(Variant::gpt2mvs), toy_vocab(), 8, 6, 6);
  EXPECT_THROW(m.token_ids(tokenize("zebra")), InputError);
  EXPECT_THROW(m.token_ids(tokenize("dog dog dog dog dog dog dog")), InputError);
  EXPECT_EQ(m.token_ids(tokenize("night zebra dog")), (std::vector<int>{3, 0}));
}

TEST(Conditional, InferenceIsDeterministic) {
  Model m(toy_config(Variant::conditional), toy_vocab(), 8, 6, 8);
  const VideoInput v = toy_input("v", 6, "dog night", 2);
  EXPECT_EQ(m.predict(v).logits, m.predict(v).logits);
}

TEST(Conditional, InterventionChangesLoss) {
  Model m(toy_config(Variant::conditional), toy_vocab(), 8, 6, 8);
  VideoInput v = toy_input("v", 6, "dog night beach", 2);
  VideoInput::Intervened iv{v.frames, v.frame_segments, tokenize("dog"), std::vector<int>(6, 1)};
  v.intervened = iv;
  ag::Tape t1, t2;
  Rng r1(3), r2(3);
  EXPECT_NE(m.loss(t1, v, r1, true).scalar(), m.loss(t2, v, r2, false).scalar());
}

TEST(Conditional, ObjectiveIsAdditiveOverRecords) {
  nn::ParameterSet ps;
  Rng rng(4);
  ConditionalHeads h(ps, "h", {5, 1, 6}, rng);
  const Matrix x = oracle::random_matrix(2, 5, rng);
  auto terms = [&](const Matrix& rows, std::vector<int> tv, std::vector<int> y, int skip) {
    ag::Tape t;
    Rng r(77);
    for (int i = 0; i < skip; ++i) r.normal();
    return conditional_objective(t, {t.constant(rows), std::move(tv), std::move(y)}, h, r).objective.scalar();
  };
  const double both = terms(x, {1, 0}, {2, 3}, 0);
  const double first = terms(x.topRows(1), {1}, {2}, 0);
  const double second = terms(x.bottomRows(1), {0}, {3}, 1);
  EXPECT_TRUE(std::isfinite(both));
  EXPECT_NEAR(both, first + second, 1e-9);
}

TEST(Pretrain, LossDecreasesAndNeedsLabels) {
  ModelConfig c = toy_config(Variant::pseudo_pretrain);
  Model m(c, toy_vocab(), 8, 6, 9);
  const auto set = toy_set();
  Rng rng(1);
  const auto losses = pretrain_segments(m, set, 1e-2, 50, c.adam, rng);
  ASSERT_EQ(losses.size(), 50u);
  EXPECT_LT(losses.back(), losses.front());
  auto bad = set;
  bad[0].segment_labels.clear();
  EXPECT_THROW(pretrain_segments(m, bad, 1e-2, 1, c.adam, rng), InputError);
}

TEST(Pretrain, DisablingChangesInitialFineTuneLoss) {
  ModelConfig c = toy_config(Variant::pseudo_pretrain);
  const auto set = toy_set();
  Model with(c, toy_vocab(), 8, 6, 9);
  c.pretrain = false;
  Model without(c, toy_vocab(), 8, 6, 9);
  const auto a = train(with, set, {}, {3});
  const auto b = train(without, set, {}, {3});
  EXPECT_EQ(a.pretrain_losses.size(), 3u);
  EXPECT_TRUE(b.pretrain_losses.empty());
  EXPECT_NE(a.initial_train_loss, b.initial_train_loss);
}

TEST(Train, DeterministicHistory) {
  for (Variant var : {Variant::queryvs, Variant::conditional}) {
    const auto set = toy_set();
    Model a(toy_config(var), toy_vocab(), 8, 6, 1), b(toy_config(var), toy_vocab(), 8, 6, 1);
    const auto ra = train(a, set, set, {11});
    const auto rb = train(b, set, set, {11});
    EXPECT_EQ(ra.history, rb.history);
    EXPECT_EQ(ra.history.size(), 6u);
    EXPECT_EQ(params_to_json(a.params()).dump(), params_to_json(b.params()).dump());
  }
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  ModelConfig c = toy_config(Variant::gpt2mvs);
  c.learning_rate = 0.0;
  c.epochs = 1;
  Model m(c, toy_vocab(), 8, 6, 2);
  const auto before = ParamSnapshot::of(m.params());
  train(m, toy_set(), {}, {0});
  for (std::size_t i = 0; i < m.params().size(); ++i) EXPECT_EQ(m.params()[i].value, before.values[i]);
}

TEST(Train, NanAborts) {
  Model m(toy_config(Variant::queryvs), toy_vocab(), 8, 6, 2);
  m.params().at("head.b").value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train(m, toy_set(), {}, {0}), NumericError);
}

TEST(Checkpoint, RoundTripRestoresWeightsAndPredictions) {
  testutil::TempDir dir("ckpt");
  for (Variant var : {Variant::queryvs, Variant::gpt2mvs, Variant::conditional, Variant::pseudo_pretrain}) {
    Model m(toy_config(var), toy_vocab(), 8, 6, 3);
    train(m, toy_set(), {}, {1});
    CheckpointMeta meta;
    meta.epoch = 3;
    meta.seed = 3;
    save_checkpoint(dir.path() / "c.json", m, meta);
    const auto loaded = load_checkpoint(dir.path() / "c.json");
    for (std::size_t i = 0; i < m.params().size(); ++i) EXPECT_EQ(loaded.model->params()[i].value, m.params()[i].value);
    const VideoInput v = toy_input("v", 6, "dog car", 5);
    EXPECT_EQ(loaded.model->predict(v).logits, m.predict(v).logits);
    EXPECT_EQ(loaded.meta.epoch, 3u);
  }
  Json broken = checkpoint_to_json(Model(toy_config(Variant::queryvs), toy_vocab(), 8, 6, 3), {});
  broken["params"][0]["shape"] = {1, 1};
  EXPECT_THROW(checkpoint_from_json(broken), InputError);
}

TEST(Checkpoint, PretrainedTrunkSurvivesReload) {
  testutil::TempDir dir("trunk");
  ModelConfig c = toy_config(Variant::pseudo_pretrain);
  Model m(c, toy_vocab(), 8, 6, 4);
  Rng rng(1);
  pretrain_segments(m, toy_set(), 1e-2, 5, c.adam, rng);
  save_checkpoint(dir.path() / "p.json", m, {});
  const auto loaded = load_checkpoint(dir.path() / "p.json");
  const auto a = m.trunk_parameters(), b = loaded.model->trunk_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value);
}
