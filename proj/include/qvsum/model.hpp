#pragma once

// The four model variants, the classification loss, training loops
// (including segment-level pre-training) and the checkpoint container.

#include "qvsum/conditional.hpp"
#include "qvsum/fusion.hpp"
#include "qvsum/summarize_eval.hpp"

#include <functional>

namespace qvsum {

enum class Variant { queryvs, gpt2mvs, conditional, pseudo_pretrain };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::queryvs: return "queryvs";
    case Variant::gpt2mvs: return "gpt2mvs";
    case Variant::conditional: return "conditional";
    case Variant::pseudo_pretrain: return "pseudo_pretrain";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "queryvs") return Variant::queryvs;
  if (s == "gpt2mvs") return Variant::gpt2mvs;
  if (s == "conditional") return Variant::conditional;
  if (s == "pseudo_pretrain") return Variant::pseudo_pretrain;
  throw InputError("unknown model variant '" + s + "'");
}

struct ModelConfig {
  Variant variant = Variant::queryvs;
  FuseMode fusion_mode = FuseMode::mul;
  double learning_rate = 1e-4;
  std::size_t epochs = 50;
  nn::AdamOptions adam;  // learning_rate is taken from above
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t num_blocks = 2;
  std::size_t ffn_dim = 128;
  std::size_t max_query_len = 16;
  std::size_t kappa = 0;  // 0: ceil(n / 2)
  std::size_t latent_dim = 8;
  std::size_t fc_dim = 64;
  double helper_weight = 1.0;
  bool pretrain = true;
  double pretrain_learning_rate = 1e-7;
  std::size_t pretrain_epochs = 100;
};

inline ModelConfig default_model_config(Variant v) {
  ModelConfig c;
  c.variant = v;
  switch (v) {
    case Variant::queryvs: c.learning_rate = 1e-4; c.epochs = 50; break;
    case Variant::gpt2mvs: c.learning_rate = 1e-4; c.epochs = 10; break;
    case Variant::conditional: c.learning_rate = 1e-6; c.epochs = 60; break;
    case Variant::pseudo_pretrain: c.learning_rate = 1e-7; c.epochs = 100; break;
  }
  return c;
}

inline OrderedJson to_json(const ModelConfig& c) {
  OrderedJson j;
  j["variant"] = to_string(c.variant);
  j["fusion_mode"] = to_string(c.fusion_mode);
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}};
  j["embed_dim"] = c.embed_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["num_blocks"] = c.num_blocks;
  j["ffn_dim"] = c.ffn_dim;
  j["max_query_len"] = c.max_query_len;
  j["kappa"] = c.kappa;
  j["latent_dim"] = c.latent_dim;
  j["fc_dim"] = c.fc_dim;
  j["helper_weight"] = c.helper_weight;
  j["pretrain"] = c.pretrain;
  j["pretrain_learning_rate"] = c.pretrain_learning_rate;
  j["pretrain_epochs"] = c.pretrain_epochs;
  return j;
}

// Missing keys take the variant's defaults; unknown keys are rejected.
inline ModelConfig model_config_from_json(const Json& j) {
  const std::string ctx = "model config";
  require_known_keys(j, {"variant", "fusion_mode", "learning_rate", "epochs", "adam", "embed_dim", "hidden_dim",
                         "num_blocks", "ffn_dim", "max_query_len", "kappa", "latent_dim", "fc_dim", "helper_weight",
                         "pretrain", "pretrain_learning_rate", "pretrain_epochs"},
                     ctx);
  ModelConfig c = default_model_config(parse_variant(get_field_or<std::string>(j, "variant", "queryvs", ctx)));
  if (j.contains("fusion_mode")) c.fusion_mode = parse_fuse_mode(get_field<std::string>(j, "fusion_mode", ctx));
  c.learning_rate = get_field_or(j, "learning_rate", c.learning_rate, ctx);
  c.epochs = get_field_or(j, "epochs", c.epochs, ctx);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    require_known_keys(a, {"beta1", "beta2", "epsilon"}, ctx + ".adam");
    c.adam.beta1 = get_field_or(a, "beta1", c.adam.beta1, ctx);
    c.adam.beta2 = get_field_or(a, "beta2", c.adam.beta2, ctx);
    c.adam.epsilon = get_field_or(a, "epsilon", c.adam.epsilon, ctx);
  }
  c.embed_dim = get_field_or(j, "embed_dim", c.embed_dim, ctx);
  c.hidden_dim = get_field_or(j, "hidden_dim", c.hidden_dim, ctx);
  c.num_blocks = get_field_or(j, "num_blocks", c.num_blocks, ctx);
  c.ffn_dim = get_field_or(j, "ffn_dim", c.ffn_dim, ctx);
  c.max_query_len = get_field_or(j, "max_query_len", c.max_query_len, ctx);
  c.kappa = get_field_or(j, "kappa", c.kappa, ctx);
  c.latent_dim = get_field_or(j, "latent_dim", c.latent_dim, ctx);
  c.fc_dim = get_field_or(j, "fc_dim", c.fc_dim, ctx);
  c.helper_weight = get_field_or(j, "helper_weight", c.helper_weight, ctx);
  c.pretrain = get_field_or(j, "pretrain", c.pretrain, ctx);
  c.pretrain_learning_rate = get_field_or(j, "pretrain_learning_rate", c.pretrain_learning_rate, ctx);
  c.pretrain_epochs = get_field_or(j, "pretrain_epochs", c.pretrain_epochs, ctx);
  if (!(c.learning_rate >= 0.0)) throw InputError(ctx + ": learning_rate must be non-negative");
  if (c.epochs < 1) throw InputError(ctx + ": epochs must be at least 1");
  if (c.embed_dim == 0 || c.hidden_dim == 0 || c.num_blocks == 0 || c.ffn_dim == 0 || c.max_query_len == 0 ||
      c.latent_dim == 0 || c.fc_dim == 0)
    throw InputError(ctx + ": dimensions must be positive");
  return c;
}

// -log softmax(logits)[cls]
inline double cross_entropy(const RowVector& logits, int cls) {
  if (cls < 0 || cls >= logits.size()) throw std::out_of_range("cross_entropy: class out of range");
  const double m = logits.maxCoeff();
  return -logits(cls) + m + std::log((logits.array() - m).exp().sum());
}

// Mean over rows.
inline Var cross_entropy(const Var& logits, const std::vector<int>& labels) {
  return ag::scale(ag::sum(ag::pick(ag::log_softmax_rows(logits), labels)), -1.0 / static_cast<double>(labels.size()));
}

// Row-wise argmax; the lowest class wins ties.
inline std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = static_cast<int>(c);
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

struct PredictionBatch {
  Matrix logits;  // frames x classes
  std::vector<int> predicted() const { return argmax_rows(logits); }
};

// Model-ready view of one (video, query) pair. Frame rows are padded to
// max_frames.
struct VideoInput {
  std::string video_id;
  Split split = Split::train;
  std::size_t original_len = 0;
  Matrix frames;          // max_frames x d2
  Matrix frame_segments;  // max_frames x d3, segment row of each frame
  Matrix segments;        // S x d3
  Matrix segment_means;   // S x d2, mean frame feature of each segment
  std::vector<std::string> query;
  std::vector<int> labels;          // max_frames
  std::vector<int> segment_labels;  // S
  std::vector<int> gold;            // original_len
  std::vector<std::vector<int>> annotator_gold;

  // Training-time view under intervention.
  struct Intervened {
    Matrix frames;
    Matrix frame_segments;
    std::vector<std::string> query;
    std::vector<int> t;  // per padded frame
  };
  std::optional<Intervened> intervened;
};

class Model {
 public:
  Model(const ModelConfig& cfg, Vocab vocab, Eigen::Index frame_dim, Eigen::Index segment_dim, std::uint64_t seed)
      : cfg_(cfg), vocab_(std::move(vocab)), frame_dim_(frame_dim), segment_dim_(segment_dim) {
    if (vocab_.size() == 0) throw InputError("model: empty vocabulary");
    Rng rng(derive_seed(seed, "init"));
    const auto H = static_cast<Eigen::Index>(cfg.hidden_dim);
    const auto V = static_cast<Eigen::Index>(vocab_.size());
    EncoderConfig enc{cfg.embed_dim, cfg.hidden_dim, cfg.num_blocks, cfg.max_query_len, cfg.ffn_dim};
    switch (cfg.variant) {
      case Variant::queryvs: {
        const Eigen::Index qdim = cfg.fusion_mode == FuseMode::concat ? H : frame_dim;
        query_proj_ = nn::Linear(ps_, "query.proj", V, qdim, rng);
        const Eigen::Index fused = cfg.fusion_mode == FuseMode::concat ? qdim + frame_dim : frame_dim;
        head_ = nn::Linear(ps_, "head", fused, kNumClasses, rng);
        break;
      }
      case Variant::gpt2mvs:
        encoder_ = TextEncoder(ps_, "encoder", vocab_.size(), enc, rng);
        text_gate_ = nn::HadamardGate(ps_, "text_gate", H, rng);
        visual_proj_ = nn::Linear(ps_, "visual.proj", frame_dim, H, rng);
        visual_gate_ = nn::HadamardGate(ps_, "visual_gate", H, rng);
        interactive_ = InteractiveAttention(ps_, "interactive", H, rng);
        head_ = nn::Linear(ps_, "head", H, kNumClasses, rng);
        break;
      case Variant::conditional: {
        cond_embed_ = TokenEmbedding(ps_, "cond.embed", vocab_.size(), cfg.embed_dim, cfg.max_query_len, rng);
        cond_attn_ = AttentionProjections(ps_, "cond.attn", static_cast<Eigen::Index>(cfg.embed_dim), H, rng);
        const auto F = static_cast<Eigen::Index>(cfg.fc_dim);
        cond_module_ = ConditionalModule(ps_, "cond.module", H, segment_dim, static_cast<Eigen::Index>(cfg.ffn_dim), F, rng);
        ConditionalDims dims{F, static_cast<Eigen::Index>(cfg.latent_dim), H};
        cond_heads_ = ConditionalHeads(ps_, "cond.heads", dims, rng);
        break;
      }
      case Variant::pseudo_pretrain:
        encoder_ = TextEncoder(ps_, "encoder", vocab_.size(), enc, rng);
        text_gate_ = nn::HadamardGate(ps_, "text_gate", H, rng);
        visual_proj_ = nn::Linear(ps_, "visual2d.proj", frame_dim, H, rng);
        visual_gate_ = nn::HadamardGate(ps_, "visual2d.gate", H, rng);
        segment_proj_ = nn::Linear(ps_, "visual3d.proj", segment_dim, H, rng);
        segment_gate_ = nn::HadamardGate(ps_, "visual3d.gate", H, rng);
        mutual_ = MutualAttention(ps_, "mutual", H, rng);
        seg_head_ = nn::Linear(ps_, "seg_head", H, kNumClasses, rng);
        head_ = nn::Linear(ps_, "head", H, kNumClasses, rng);
        break;
    }
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  Eigen::Index frame_dim() const { return frame_dim_; }
  Eigen::Index segment_dim() const { return segment_dim_; }
  nn::ParameterSet& params() { return ps_; }
  const nn::ParameterSet& params() const { return ps_; }

  std::vector<int> token_ids(const std::vector<std::string>& tokens) const {
    auto ids = encode_ids(tokens, vocab_);
    if (ids.empty()) throw InputError("query has no in-vocabulary words");
    if (ids.size() > cfg_.max_query_len) {
      throw InputError("query has " + std::to_string(ids.size()) + " known words; max_query_len is " +
                       std::to_string(cfg_.max_query_len));
    }
    return ids;
  }

  // Per-frame class logits on clean inputs. Never samples.
  Var logits(Tape& t, const VideoInput& v) const { return logits_for(t, v.frames, v.frame_segments, v.query); }

  PredictionBatch predict(const VideoInput& v) const {
    Tape t;
    return {logits(t, v).value()};
  }

  // Scalar training loss for one video. With `use_intervention` the conditional
  // variant sees the intervened inputs and labels t.
  Var loss(Tape& t, const VideoInput& v, Rng& rng, bool use_intervention) const {
    if (cfg_.variant != Variant::conditional) return cross_entropy(logits(t, v), v.labels);
    const bool iv = use_intervention && v.intervened.has_value();
    const Matrix& frames = iv ? v.intervened->frames : v.frames;
    const Matrix& segs = iv ? v.intervened->frame_segments : v.frame_segments;
    const auto& query = iv ? v.intervened->query : v.query;
    std::vector<int> tv = iv ? v.intervened->t : std::vector<int>(v.labels.size(), 0);
    Var x = conditional_features(t, frames, segs, query);
    ConditionalBatch batch{x, std::move(tv), v.labels};
    ObjectiveTerms terms = conditional_objective(t, batch, cond_heads_, rng, cfg_.helper_weight);
    return ag::scale(terms.objective, -1.0 / static_cast<double>(v.labels.size()));
  }

  // Segment-level loss used by pre-training (pseudo_pretrain only).
  Var segment_loss(Tape& t, const VideoInput& v) const {
    require_variant(Variant::pseudo_pretrain, "segment_loss");
    if (v.segment_labels.empty() || static_cast<Eigen::Index>(v.segment_labels.size()) != v.segments.rows())
      throw InputError("video '" + v.video_id + "': missing segment pseudo labels");
    Var z = pseudo_trunk(t, t.constant(v.segment_means), t.constant(v.segments), v.query);
    return cross_entropy(seg_head_(t, z), v.segment_labels);
  }

  // Fresh frame head, used when fine-tuning after pre-training.
  void reset_head(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "head-reset"));
    head_.weight->value = nn::glorot(head_.out_dim(), head_.in_dim(), rng);
    head_.bias->value.setZero();
    for (auto* p : {head_.weight, head_.bias}) {
      p->adam_m.resize(0, 0);
      p->adam_v.resize(0, 0);
      p->zero_grad();
    }
  }

  // Trunk parameters (everything except the heads) for transfer checks.
  std::vector<const ag::Parameter*> trunk_parameters() const {
    std::vector<const ag::Parameter*> out;
    for (std::size_t i = 0; i < ps_.size(); ++i)
      if (ps_[i].name.rfind("head.", 0) != 0 && ps_[i].name.rfind("seg_head.", 0) != 0) out.push_back(&ps_[i]);
    return out;
  }

 private:
  void require_variant(Variant v, const char* what) const {
    if (cfg_.variant != v) throw std::logic_error(std::string(what) + " needs variant " + to_string(v));
  }

  Var logits_for(Tape& t, const Matrix& frames, const Matrix& segs, const std::vector<std::string>& query) const {
    switch (cfg_.variant) {
      case Variant::queryvs: {
        Var q = query_proj_(t, t.constant(bow_encode(join(query), vocab_)));
        return head_(t, fuse_simple(q, t.constant(frames), cfg_.fusion_mode));
      }
      case Variant::gpt2mvs: {
        const auto ids = token_ids(query);
        Var z_ta = text_attention(t, encoder_(t, ids), text_gate_);
        Var z_va = visual_attention(t, visual_proj_(t, t.constant(frames)), visual_gate_);
        return head_(t, interactive_(t, z_ta, z_va));
      }
      case Variant::conditional:
        return cond_heads_.q_y0(t, conditional_features(t, frames, segs, query));
      case Variant::pseudo_pretrain:
        return head_(t, pseudo_trunk(t, t.constant(frames), t.constant(segs), query));
    }
    throw std::logic_error("bad variant");
  }

  static std::string join(const std::vector<std::string>& tokens) {
    std::string s;
    for (const auto& tok : tokens) s += (s.empty() ? "" : " ") + tok;
    return s;
  }

  // X_mul per frame.
  Var conditional_features(Tape& t, const Matrix& frames, const Matrix& segs, const std::vector<std::string>& query) const {
    (void)frames;
    const auto ids = token_ids(query);
    Var tokens = embed_tokens(t, ids, cond_embed_);
    const auto n = static_cast<Eigen::Index>(ids.size());
    const Eigen::Index kappa = cfg_.kappa == 0 ? default_kappa(n) : std::min<Eigen::Index>(n, static_cast<Eigen::Index>(cfg_.kappa));
    Var v_kappa = conditional_attention(t, tokens, kappa, cond_attn_).v_kappa;
    return cond_module_(t, v_kappa, t.constant(segs));
  }

  Var pseudo_trunk(Tape& t, const Var& frames2d, const Var& frames3d, const std::vector<std::string>& query) const {
    const auto ids = token_ids(query);
    Var z_ta = text_attention(t, encoder_(t, ids), text_gate_);
    Var z_as = visual_attention(t, visual_proj_(t, frames2d), visual_gate_);
    Var z_ast = visual_attention(t, segment_proj_(t, frames3d), segment_gate_);
    return mutual_(t, z_ta, z_as, z_ast);
  }

  ModelConfig cfg_;
  Vocab vocab_;
  Eigen::Index frame_dim_ = 0;
  Eigen::Index segment_dim_ = 0;
  nn::ParameterSet ps_;

  nn::Linear query_proj_;
  nn::Linear head_;
  TextEncoder encoder_;
  nn::HadamardGate text_gate_;
  nn::Linear visual_proj_;
  nn::HadamardGate visual_gate_;
  InteractiveAttention interactive_;
  TokenEmbedding cond_embed_;
  AttentionProjections cond_attn_;
  ConditionalModule cond_module_;
  ConditionalHeads cond_heads_;
  nn::Linear segment_proj_;
  nn::HadamardGate segment_gate_;
  MutualAttention mutual_;
  nn::Linear seg_head_;
};

// ---------------------------------------------------------------------------
// Evaluation pass

struct PassResult {
  double loss = 0.0;  // mean per video
  std::vector<VideoPrediction> predictions;
};

inline void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericError("non-finite " + what);
}

inline PassResult evaluate_pass(const Model& m, std::span<const VideoInput> videos, std::uint64_t seed) {
  PassResult r;
  for (const auto& v : videos) {
    Tape t;
    Rng rng(derive_seed(seed, "eval/" + v.video_id));
    const double l = m.loss(t, v, rng, false).scalar();
    require_finite(l, "loss on video '" + v.video_id + "'");
    r.loss += l / static_cast<double>(videos.size());
    Tape t2;
    auto pred = argmax_rows(m.logits(t2, v).value());
    pred.resize(v.original_len);
    r.predictions.push_back({v.video_id, std::move(pred), v.gold, v.annotator_gold});
  }
  return r;
}

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

inline std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch,split,loss,accuracy,f1\n";
  for (const auto& r : rows) os << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.accuracy << ',' << r.f1 << '\n';
  return os.str();
}

struct TrainSettings {
  std::uint64_t seed = 0;
  double beta = 1.0;
  double budget_fraction = 0.15;
  GoldAggregation gold_aggregation = GoldAggregation::majority;
};

struct ParamSnapshot {
  std::vector<Matrix> values;

  static ParamSnapshot of(const nn::ParameterSet& ps) {
    ParamSnapshot s;
    for (std::size_t i = 0; i < ps.size(); ++i) s.values.push_back(ps[i].value);
    return s;
  }
  void restore(nn::ParameterSet& ps) const {
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].value = values[i];
  }
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::vector<double> pretrain_losses;  // per pre-training epoch
  double initial_train_loss = 0.0;      // before the first fine-tuning step
  double final_train_loss = 0.0;
  std::size_t best_epoch = 0;
  double best_score = -1.0;
  ParamSnapshot best;
  std::string rng_state;
};

inline bool selects_on_accuracy(Variant v) { return v == Variant::queryvs || v == Variant::gpt2mvs; }

// Segment-level pre-training of the shared trunk, returning the mean loss of
// each epoch measured before its updates.
inline std::vector<double> pretrain_segments(Model& m, std::span<const VideoInput> train, double learning_rate,
                                             std::size_t epochs, const nn::AdamOptions& adam_opts, Rng& rng) {
  if (train.empty()) throw InputError("pre-training needs at least one training video");
  nn::AdamOptions opts = adam_opts;
  opts.learning_rate = learning_rate;
  nn::Adam adam(opts);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> losses;
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double total = 0.0;
    for (std::size_t idx : order) {
      Tape t;
      Var l = m.segment_loss(t, train[idx]);
      require_finite(l.scalar(), "pre-training loss");
      total += l.scalar() / static_cast<double>(train.size());
      m.params().zero_grad();
      t.backward(l);
      adam.step(m.params());
    }
    losses.push_back(total);
  }
  return losses;
}

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Epoch loop with seeded shuffling and one Adam step per video. The selection
// split is val when present, otherwise train.
inline TrainResult train(Model& m, std::span<const VideoInput> train_set, std::span<const VideoInput> val_set,
                         const TrainSettings& s, const EpochCallback& on_epoch = {}) {
  if (train_set.empty()) throw InputError("training split is empty");
  const ModelConfig& cfg = m.config();
  TrainResult r;
  Rng rng(derive_seed(s.seed, "train"));
  if (cfg.variant == Variant::pseudo_pretrain && cfg.pretrain) {
    r.pretrain_losses = pretrain_segments(m, train_set, cfg.pretrain_learning_rate, cfg.pretrain_epochs, cfg.adam, rng);
    m.reset_head(s.seed);
  }
  const std::uint64_t eval_seed = derive_seed(s.seed, "eval");
  r.initial_train_loss = evaluate_pass(m, train_set, eval_seed).loss;

  nn::AdamOptions opts = cfg.adam;
  opts.learning_rate = cfg.learning_rate;
  nn::Adam adam(opts);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const bool by_accuracy = selects_on_accuracy(cfg.variant);
  auto score_split = [&](std::span<const VideoInput> vids, const std::string& name, std::size_t epoch) {
    PassResult p = evaluate_pass(m, vids, eval_seed);
    EvalReport rep = evaluate(p.predictions, name, s.beta, s.budget_fraction, s.gold_aggregation);
    EpochMetrics em{epoch, name, p.loss, rep.accuracy, rep.temporal.f1};
    r.history.push_back(em);
    if (on_epoch) on_epoch(em);
    return em;
  };

  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t idx : order) {
      Tape t;
      Var l = m.loss(t, train_set[idx], rng, true);
      require_finite(l.scalar(), "training loss at epoch " + std::to_string(e) + " (video '" +
                                     train_set[idx].video_id + "')");
      m.params().zero_grad();
      t.backward(l);
      adam.step(m.params());
    }
    if (!m.params().all_finite()) throw NumericError("parameters became non-finite at epoch " + std::to_string(e));
    const EpochMetrics tr = score_split(train_set, "train", e);
    r.final_train_loss = tr.loss;
    EpochMetrics sel = tr;
    if (!val_set.empty()) sel = score_split(val_set, "val", e);
    const double score = by_accuracy ? sel.accuracy : sel.f1;
    if (score > r.best_score) {
      r.best_score = score;
      r.best_epoch = e;
      r.best = ParamSnapshot::of(m.params());
    }
  }
  r.rng_state = rng.state();
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint container

inline constexpr int kCheckpointVersion = 1;

inline OrderedJson params_to_json(const nn::ParameterSet& ps) {
  OrderedJson arr = OrderedJson::array();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& p = ps[i];
    OrderedJson e;
    e["name"] = p.name;
    e["shape"] = {p.value.rows(), p.value.cols()};
    std::vector<double> data(static_cast<std::size_t>(p.value.size()));
    for (Eigen::Index r = 0, k = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) data[static_cast<std::size_t>(k++)] = p.value(r, c);
    e["data"] = std::move(data);
    arr.push_back(std::move(e));
  }
  return arr;
}

inline void params_from_json(nn::ParameterSet& ps, const Json& arr) {
  if (!arr.is_array() || arr.size() != ps.size())
    throw InputError("checkpoint: expected " + std::to_string(ps.size()) + " parameters");
  for (const auto& e : arr) {
    const auto name = get_field<std::string>(e, "name", "checkpoint parameter");
    if (!ps.contains(name)) throw InputError("checkpoint: unexpected parameter '" + name + "'");
    auto& p = ps.at(name);
    const auto shape = get_field<std::vector<Eigen::Index>>(e, "shape", name);
    if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols())
      throw InputError("checkpoint: shape mismatch for '" + name + "'");
    const auto data = get_field<std::vector<double>>(e, "data", name);
    if (static_cast<Eigen::Index>(data.size()) != p.value.size()) throw InputError("checkpoint: size mismatch for '" + name + "'");
    for (Eigen::Index r = 0, k = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = data[static_cast<std::size_t>(k++)];
  }
}

struct CheckpointMeta {
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::string rng_state;
  std::string prepared_dir;
  double beta = 1.0;
  double budget_fraction = 0.15;
};

inline OrderedJson checkpoint_to_json(const Model& m, const CheckpointMeta& meta) {
  OrderedJson j;
  j["format"] = "qvsum-checkpoint";
  j["version"] = kCheckpointVersion;
  j["epoch"] = meta.epoch;
  j["seed"] = meta.seed;
  j["prepared_dir"] = meta.prepared_dir;
  j["eval"] = {{"beta", meta.beta}, {"budget_fraction", meta.budget_fraction}};
  j["model"] = to_json(m.config());
  j["vocab"] = to_json(m.vocab());
  j["frame_dim"] = m.frame_dim();
  j["segment_dim"] = m.segment_dim();
  j["rng_state"] = meta.rng_state;
  j["params"] = params_to_json(m.params());
  return j;
}

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint checkpoint_from_json(const Json& j) {
  const std::string ctx = "checkpoint";
  if (get_field<std::string>(j, "format", ctx) != "qvsum-checkpoint") throw InputError("not a checkpoint file");
  if (get_field<int>(j, "version", ctx) != kCheckpointVersion) throw InputError("unsupported checkpoint version");
  LoadedCheckpoint out;
  out.meta.epoch = get_field<std::size_t>(j, "epoch", ctx);
  out.meta.seed = get_field<std::uint64_t>(j, "seed", ctx);
  out.meta.prepared_dir = get_field<std::string>(j, "prepared_dir", ctx);
  out.meta.rng_state = get_field<std::string>(j, "rng_state", ctx);
  if (j.contains("eval")) {
    out.meta.beta = get_field_or(j.at("eval"), "beta", out.meta.beta, ctx);
    out.meta.budget_fraction = get_field_or(j.at("eval"), "budget_fraction", out.meta.budget_fraction, ctx);
  }
  const ModelConfig cfg = model_config_from_json(j.at("model"));
  out.model = std::make_unique<Model>(cfg, vocab_from_json(j.at("vocab")), get_field<Eigen::Index>(j, "frame_dim", ctx),
                                      get_field<Eigen::Index>(j, "segment_dim", ctx), out.meta.seed);
  params_from_json(out.model->params(), j.at("params"));
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& m, const CheckpointMeta& meta) {
  write_text_file(path, checkpoint_to_json(m, meta).dump());
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json_file(path));
}

}  // namespace qvsum
