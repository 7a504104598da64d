#pragma once

// Small synthetic corpus whose frame labels depend on the query: every frame
// shows one of four concepts, a frame scores 3 when its concept is the first
// query word, 2 when it is the second and 0 or 1 otherwise.

#include "qvsum/ingest.hpp"

namespace qvsum {

struct SyntheticOptions {
  std::size_t train_videos = 6;
  std::size_t val_videos = 0;
  std::size_t test_videos = 0;
  std::size_t frames = 32;
  int frame_size = 8;
  std::uint64_t seed = 7;
  std::size_t feature_dim = 256;
};

inline const std::array<std::string, 4>& synthetic_vocabulary() {
  static const std::array<std::string, 4> words{"dog", "beach", "car", "night"};
  return words;
}

// Query word pairs cycled over videos.
inline std::pair<int, int> synthetic_query_pair(std::size_t video) {
  static const std::array<std::pair<int, int>, 6> pairs{{{0, 1}, {2, 3}, {1, 2}, {3, 0}, {0, 2}, {1, 3}}};
  return pairs[video % pairs.size()];
}

inline std::string synthetic_query(int a, int b) {
  return synthetic_vocabulary()[static_cast<std::size_t>(a)] + " " + synthetic_vocabulary()[static_cast<std::size_t>(b)];
}

// Hidden concept per frame, in runs of 4 frames.
inline std::vector<int> synthetic_concepts(std::size_t video, std::size_t frames, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "concepts/" + std::to_string(video)));
  std::vector<int> out(frames);
  int c = static_cast<int>(rng.index(4));
  for (std::size_t i = 0; i < frames; ++i) {
    if (i % 4 == 0) c = static_cast<int>(rng.index(4));
    out[i] = c;
  }
  return out;
}

inline std::vector<int> synthetic_labels(const std::vector<int>& concepts, int first, int second) {
  std::vector<int> out(concepts.size());
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (concepts[i] == first) out[i] = 3;
    else if (concepts[i] == second) out[i] = 2;
    else out[i] = concepts[i] % 2;
  }
  return out;
}

inline Frame synthetic_frame(int concept_id, int size) {
  static const std::array<std::array<double, 3>, 4> colors{{{0.8, 0.5, 0.2}, {0.9, 0.85, 0.5}, {0.3, 0.3, 0.8}, {0.1, 0.1, 0.2}}};
  Frame f(3, size, size);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) f.at(c, y, x) = colors[static_cast<std::size_t>(concept_id)][static_cast<std::size_t>(c)];
  return f;
}

inline DatasetConfig synthetic_dataset_config(const SyntheticOptions& o) {
  DatasetConfig c;
  c.name = DatasetName::synthetic;
  c.max_frames = o.frames;
  c.height = o.frame_size;
  c.width = o.frame_size;
  c.fps = 1;
  c.frame_features = {ExtractorKind::stub, o.feature_dim, 1, 0};
  c.segment_features = {ExtractorKind::stub, o.feature_dim, 2, 1};
  c.gold_aggregation = GoldAggregation::majority;
  return c;
}

// Writes manifest.jsonl, dataset.json and frames/<video_id>/frame_%05d.png.
inline Manifest write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticOptions& o = {}) {
  Manifest m;
  m.base_dir = dir;
  const std::size_t total = o.train_videos + o.val_videos + o.test_videos;
  for (std::size_t v = 0; v < total; ++v) {
    ManifestEntry e;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%02zu", v);
    e.video_id = id;
    e.frames_dir = "frames/" + e.video_id;
    const auto [a, b] = synthetic_query_pair(v);
    e.query = synthetic_query(a, b);
    e.split = v < o.train_videos ? Split::train : v < o.train_videos + o.val_videos ? Split::val : Split::test;
    const auto concepts = synthetic_concepts(v, o.frames, o.seed);
    const auto labels = synthetic_labels(concepts, a, b);
    std::vector<double> exact(labels.begin(), labels.end());
    std::vector<double> noisy = exact;
    Rng rng(derive_seed(o.seed, "noise/" + e.video_id));
    for (auto& s : noisy)
      if (rng.bernoulli(0.2)) s = static_cast<double>(rng.index(4));
    e.annotations = {exact, exact, noisy};
    const auto fdir = dir / e.frames_dir;
    std::filesystem::create_directories(fdir);
    for (std::size_t i = 0; i < o.frames; ++i) write_png(fdir / frame_filename(i), synthetic_frame(concepts[i], o.frame_size));
    m.entries.push_back(std::move(e));
  }
  write_text_file(dir / "manifest.jsonl", serialize_manifest(m));
  write_text_file(dir / "dataset.json", to_json(synthetic_dataset_config(o)).dump(2) + "\n");
  return m;
}

}  // namespace qvsum
