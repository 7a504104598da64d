#pragma once

#include "qvsum/common.hpp"

#include "json.hpp"

#include <span>
#include <utility>
#include <vector>

namespace qvsum {

// Half-open frame interval [begin, end).
struct FrameSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const FrameSpan&, const FrameSpan&) = default;
};

struct SegmentLabel {
  std::size_t segment_index = 0;
  FrameSpan span;
  double mean_score = 0.0;

  friend bool operator==(const SegmentLabel&, const SegmentLabel&) = default;
};

// Two-second windows at `fps` frames per second; the last window may be short.
inline std::vector<FrameSpan> segment_spans(std::size_t num_frames, std::size_t fps) {
  if (fps == 0) throw std::invalid_argument("segment_spans: fps must be positive");
  const std::size_t window = 2 * fps;
  std::vector<FrameSpan> spans;
  for (std::size_t b = 0; b < num_frames; b += window) spans.push_back({b, std::min(b + window, num_frames)});
  return spans;
}

// Segment index of frame i.
inline std::size_t segment_of(std::size_t frame, std::size_t fps) { return frame / (2 * fps); }

template <class Score>
std::vector<SegmentLabel> gen_segment_pseudo_labels(std::span<const Score> scores, std::size_t fps) {
  if (scores.empty()) throw std::invalid_argument("gen_segment_pseudo_labels: empty score vector");
  std::vector<SegmentLabel> out;
  const auto spans = segment_spans(scores.size(), fps);
  out.reserve(spans.size());
  for (std::size_t s = 0; s < spans.size(); ++s) {
    double total = 0.0;
    for (std::size_t i = spans[s].begin; i < spans[s].end; ++i) total += static_cast<double>(scores[i]);
    out.push_back({s, spans[s], total / static_cast<double>(spans[s].size())});
  }
  return out;
}

template <class Score>
std::vector<SegmentLabel> gen_segment_pseudo_labels(const std::vector<Score>& scores, std::size_t fps) {
  return gen_segment_pseudo_labels(std::span<const Score>(scores), fps);
}

// Round half up into {0, ..., max_class}.
inline int segment_to_class(double mean_score, int max_class = kNumClasses - 1) {
  if (!std::isfinite(mean_score) || mean_score < 0.0 || mean_score > static_cast<double>(max_class)) {
    throw std::out_of_range("segment_to_class: mean score " + std::to_string(mean_score) + " outside [0, " +
                            std::to_string(max_class) + "]");
  }
  return static_cast<int>(round_half_up(mean_score));
}

inline bool score_to_relevance(int score) { return score >= 2; }

// {"<video_id>": [{"segment_index": i, "span": [a, b], "mean": m}, ...]}
inline nlohmann::ordered_json segment_labels_to_json(const std::vector<SegmentLabel>& labels) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& l : labels) {
    nlohmann::ordered_json j;
    j["segment_index"] = l.segment_index;
    j["span"] = {l.span.begin, l.span.end};
    j["mean"] = l.mean_score;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::vector<SegmentLabel> segment_labels_from_json(const nlohmann::json& arr) {
  std::vector<SegmentLabel> out;
  for (const auto& j : arr) {
    SegmentLabel l;
    l.segment_index = j.at("segment_index").get<std::size_t>();
    l.span.begin = j.at("span").at(0).get<std::size_t>();
    l.span.end = j.at("span").at(1).get<std::size_t>();
    l.mean_score = j.at("mean").get<double>();
    out.push_back(l);
  }
  return out;
}

}  // namespace qvsum
