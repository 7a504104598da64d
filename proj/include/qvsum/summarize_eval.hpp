#pragma once

// Summary generation from predicted scores and the evaluation metrics:
// frame accuracy, F-beta over precision/recall pairs and temporal overlap F1.

#include "qvsum/ingest.hpp"

#include <iomanip>
#include <numeric>

namespace qvsum {

struct SummarySelection {
  std::string video_id;
  std::vector<std::size_t> selected_frames;  // ascending, original index space
  std::size_t budget = 0;
};

inline std::size_t default_budget(std::size_t original_len, double fraction = 0.15) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(round_half_up(fraction * static_cast<double>(original_len))));
}

// Relevant frames (score >= 2) below original_len, ranked by score with
// earlier index first on ties, truncated to k and returned in time order.
template <class Score>
std::vector<std::size_t> generate_summary(std::span<const Score> scores, std::size_t original_len, std::size_t k) {
  if (k == 0) throw std::invalid_argument("generate_summary: budget must be positive");
  const std::size_t n = std::min(original_len, scores.size());
  std::vector<std::size_t> relevant;
  for (std::size_t i = 0; i < n; ++i)
    if (scores[i] >= 2) relevant.push_back(i);
  std::stable_sort(relevant.begin(), relevant.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (relevant.size() > k) relevant.resize(k);
  std::sort(relevant.begin(), relevant.end());
  return relevant;
}

template <class Score>
std::vector<std::size_t> generate_summary(const std::vector<Score>& scores, std::size_t original_len, std::size_t k) {
  return generate_summary(std::span<const Score>(scores), original_len, k);
}

inline double frame_accuracy(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size()) throw std::invalid_argument("frame_accuracy: length mismatch");
  if (predicted.empty()) throw std::invalid_argument("frame_accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hit += predicted[i] == gold[i];
  return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

inline double frame_accuracy(const std::vector<int>& predicted, const std::vector<int>& gold) {
  return frame_accuracy(std::span<const int>(predicted), std::span<const int>(gold));
}

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

// (1 + b^2) p r / (b^2 p + r), 0 when the denominator is 0.
inline double f_beta_pair(double p, double r, double beta) {
  const double b2 = beta * beta;
  const double den = b2 * p + r;
  return den > 0.0 ? (1.0 + b2) * p * r / den : 0.0;
}

inline double f_beta(std::span<const PrecisionRecall> pairs, double beta) {
  if (pairs.empty()) throw std::invalid_argument("f_beta: no pairs");
  if (!(beta > 0.0)) throw std::invalid_argument("f_beta: beta must be positive");
  double s = 0.0;
  for (const auto& pr : pairs) {
    if (pr.precision < 0.0 || pr.precision > 1.0 || pr.recall < 0.0 || pr.recall > 1.0)
      throw std::out_of_range("f_beta: precision/recall outside [0, 1]");
    s += f_beta_pair(pr.precision, pr.recall, beta);
  }
  return s / static_cast<double>(pairs.size());
}

inline double f_beta(const std::vector<PrecisionRecall>& pairs, double beta) {
  return f_beta(std::span<const PrecisionRecall>(pairs), beta);
}

// Precision/recall of the predicted relevant frames against the gold ones.
inline PrecisionRecall relevance_precision_recall(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size()) throw std::invalid_argument("relevance_precision_recall: length mismatch");
  std::size_t tp = 0, pp = 0, gp = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = score_to_relevance(predicted[i]), g = score_to_relevance(gold[i]);
    pp += p;
    gp += g;
    tp += p && g;
  }
  return {pp ? static_cast<double>(tp) / pp : 0.0, gp ? static_cast<double>(tp) / gp : 0.0};
}

struct TemporalScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// P = |S & G| / |S|, R = |S & G| / |G| for a predicted S and gold G.
inline TemporalScore temporal_f1(std::span<const std::size_t> selected, std::span<const std::size_t> gold,
                                 std::size_t original_len = std::numeric_limits<std::size_t>::max()) {
  std::vector<std::size_t> s(selected.begin(), selected.end()), g(gold.begin(), gold.end());
  for (auto v : {&s, &g}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
    if (!v->empty() && v->back() >= original_len) throw std::out_of_range("temporal_f1: frame index out of range");
  }
  std::vector<std::size_t> both;
  std::set_intersection(s.begin(), s.end(), g.begin(), g.end(), std::back_inserter(both));
  TemporalScore out;
  out.precision = s.empty() ? 0.0 : static_cast<double>(both.size()) / s.size();
  out.recall = g.empty() ? 0.0 : static_cast<double>(both.size()) / g.size();
  out.f1 = f_beta_pair(out.precision, out.recall, 1.0);
  return out;
}

inline TemporalScore temporal_f1(const std::vector<std::size_t>& selected, const std::vector<std::size_t>& gold,
                                 std::size_t original_len = std::numeric_limits<std::size_t>::max()) {
  return temporal_f1(std::span<const std::size_t>(selected), std::span<const std::size_t>(gold), original_len);
}

// Scores against several gold summaries, combined by max (on F1) or mean.
inline TemporalScore temporal_f1_multi(const std::vector<std::size_t>& selected,
                                       const std::vector<std::vector<std::size_t>>& golds, GoldAggregation agg,
                                       std::size_t original_len = std::numeric_limits<std::size_t>::max()) {
  if (golds.empty()) throw std::invalid_argument("temporal_f1_multi: no gold summaries");
  std::vector<TemporalScore> all;
  for (const auto& g : golds) all.push_back(temporal_f1(selected, g, original_len));
  if (agg == GoldAggregation::max) {
    return *std::max_element(all.begin(), all.end(),
                             [](const TemporalScore& a, const TemporalScore& b) { return a.f1 < b.f1; });
  }
  TemporalScore m;
  for (const auto& s : all) {
    m.precision += s.precision / all.size();
    m.recall += s.recall / all.size();
    m.f1 += s.f1 / all.size();
  }
  return m;
}

struct VideoEval {
  std::string video_id;
  std::size_t frames = 0;
  double accuracy = 0.0;
  PrecisionRecall relevance;
  TemporalScore temporal;
  std::vector<std::size_t> summary;
};

struct EvalReport {
  std::string split;
  double beta = 1.0;
  std::size_t frames = 0;
  double accuracy = 0.0;  // micro-averaged over frames
  double f_beta = 0.0;
  TemporalScore temporal;  // mean over videos
  std::vector<VideoEval> videos;
};

// Per-video inputs: predicted classes, gold classes (single aggregated vector)
// and per-annotator gold class vectors used for temporal scoring.
struct VideoPrediction {
  std::string video_id;
  std::vector<int> predicted;
  std::vector<int> gold;
  std::vector<std::vector<int>> annotator_gold;
};

inline EvalReport evaluate(const std::vector<VideoPrediction>& videos, const std::string& split, double beta,
                           double budget_fraction, GoldAggregation agg) {
  if (videos.empty()) throw std::invalid_argument("evaluate: no videos");
  EvalReport r;
  r.split = split;
  r.beta = beta;
  std::size_t hits = 0;
  std::vector<PrecisionRecall> pairs;
  for (const auto& v : videos) {
    VideoEval e;
    e.video_id = v.video_id;
    e.frames = v.predicted.size();
    e.accuracy = frame_accuracy(v.predicted, v.gold);
    hits += static_cast<std::size_t>(std::llround(e.accuracy * static_cast<double>(e.frames)));
    e.relevance = relevance_precision_recall(v.predicted, v.gold);
    pairs.push_back(e.relevance);
    const std::size_t k = default_budget(e.frames, budget_fraction);
    e.summary = generate_summary(v.predicted, e.frames, k);
    std::vector<std::vector<std::size_t>> golds;
    if (agg == GoldAggregation::majority || v.annotator_gold.empty()) {
      golds.push_back(generate_summary(v.gold, e.frames, k));
    } else {
      for (const auto& g : v.annotator_gold) golds.push_back(generate_summary(g, e.frames, k));
    }
    e.temporal = temporal_f1_multi(e.summary, golds, agg, e.frames);
    r.frames += e.frames;
    r.temporal.precision += e.temporal.precision / videos.size();
    r.temporal.recall += e.temporal.recall / videos.size();
    r.temporal.f1 += e.temporal.f1 / videos.size();
    r.videos.push_back(std::move(e));
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(r.frames);
  r.f_beta = f_beta(pairs, beta);
  return r;
}

inline OrderedJson to_json(const EvalReport& r) {
  OrderedJson j;
  j["split"] = r.split;
  j["frames"] = r.frames;
  j["accuracy"] = r.accuracy;
  j["beta"] = r.beta;
  j["f_beta"] = r.f_beta;
  j["temporal_precision"] = r.temporal.precision;
  j["temporal_recall"] = r.temporal.recall;
  j["temporal_f1"] = r.temporal.f1;
  OrderedJson vids = OrderedJson::array();
  for (const auto& v : r.videos) {
    OrderedJson e;
    e["video_id"] = v.video_id;
    e["frames"] = v.frames;
    e["accuracy"] = v.accuracy;
    e["precision"] = v.relevance.precision;
    e["recall"] = v.relevance.recall;
    e["temporal_precision"] = v.temporal.precision;
    e["temporal_recall"] = v.temporal.recall;
    e["temporal_f1"] = v.temporal.f1;
    vids.push_back(std::move(e));
  }
  j["videos"] = std::move(vids);
  return j;
}

inline std::string to_csv(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "video_id,frames,accuracy,precision,recall,temporal_precision,temporal_recall,temporal_f1\n";
  for (const auto& v : r.videos) {
    os << v.video_id << ',' << v.frames << ',' << v.accuracy << ',' << v.relevance.precision << ','
       << v.relevance.recall << ',' << v.temporal.precision << ',' << v.temporal.recall << ',' << v.temporal.f1 << '\n';
  }
  os << "ALL," << r.frames << ',' << r.accuracy << ",,," << r.temporal.precision << ',' << r.temporal.recall << ','
     << r.temporal.f1 << '\n';
  return os.str();
}

inline OrderedJson summaries_to_json(const EvalReport& r) {
  OrderedJson j = OrderedJson::object();
  for (const auto& v : r.videos) j[v.video_id] = v.summary;
  return j;
}

}  // namespace qvsum
