#pragma once

// Prepared datasets on disk and their conversion to model inputs.
//
// A prepared directory holds:
//   prepared.json   dataset config, frames root, cache root, input hash
//   manifest.jsonl  canonical manifest
//   labels.json     segment pseudo labels per video
//   report.json     counts per split

#include "qvsum/intervene.hpp"
#include "qvsum/model.hpp"

#include <cstdlib>

namespace qvsum {

struct PreparedDataset {
  std::filesystem::path dir;
  DatasetConfig config;
  Manifest manifest;
  std::filesystem::path cache_root;

  const ManifestEntry& entry(const std::string& video_id) const {
    for (const auto& e : manifest.entries)
      if (e.video_id == video_id) return e;
    throw InputError("unknown video_id '" + video_id + "'");
  }
};

inline std::filesystem::path default_cache_root(const std::filesystem::path& prepared_dir) {
  if (const char* env = std::getenv("QVSUM_CACHE_DIR"); env && *env) return std::filesystem::path(env);
  return prepared_dir / "cache";
}

inline PreparedDataset load_prepared(const std::filesystem::path& dir) {
  const auto meta_path = dir / "prepared.json";
  if (!std::filesystem::exists(meta_path)) throw InputError(dir.string() + " is not a prepared dataset (no prepared.json)");
  const Json meta = read_json_file(meta_path);
  PreparedDataset p;
  p.dir = dir;
  p.config = dataset_config_from_json(meta.at("dataset"));
  std::ifstream in(dir / "manifest.jsonl");
  if (!in) throw InputError("cannot read " + (dir / "manifest.jsonl").string());
  p.manifest = parse_manifest(in, get_field<std::string>(meta, "frames_root", "prepared.json"));
  p.cache_root = get_field<std::string>(meta, "cache_root", "prepared.json");
  return p;
}

template <class T>
std::vector<T> pad_cyclic(const std::vector<T>& v, std::size_t target) {
  return repeat_frames(std::span<const T>(v), target);
}

inline std::vector<int> segment_classes(const std::vector<int>& gold, std::size_t fps) {
  std::vector<int> out;
  for (const auto& s : gen_segment_pseudo_labels(gold, fps)) out.push_back(segment_to_class(s.mean_score));
  return out;
}

// Segment feature row for the segment holding source frame `src`, with that
// frame marked by `variant`.
inline RowVector perturbed_segment_row(const FeatureBackend& backend, const std::string& video_id, std::size_t n,
                                       std::size_t fps, std::size_t src, const std::string& variant,
                                       const std::vector<Frame>* pixels) {
  const FrameSpan span = segment_spans(n, fps)[segment_of(src, fps)];
  std::vector<FrameRef> refs;
  for (std::size_t i = span.begin; i < span.end; ++i)
    refs.push_back(FrameRef{video_id, i, i == src ? variant : std::string{}, pixels ? &(*pixels)[i] : nullptr});
  return backend.segment_features(refs, fps).row(0);
}

// Builds the model input for one entry. With a t = 1 record the intervened
// view is attached as well.
inline VideoInput make_video_input(const PreparedDataset& p, const ManifestEntry& e,
                                   const InterventionRecord* record = nullptr,
                                   const InterventionOptions& iopts = {}) {
  const DatasetConfig& cfg = p.config;
  const FeatureCache cache(p.cache_root);
  const ClipFeatures feats = clip_features(e.video_id, e.length(), cfg.fps, cfg.frame_features, cfg.segment_features, &cache);
  const std::size_t n = e.length(), T = cfg.max_frames;
  VideoInput v;
  v.video_id = e.video_id;
  v.split = e.split;
  v.original_len = n;
  v.query = tokenize(e.query);
  v.annotator_gold = class_annotations(e, cfg.name);
  v.gold = aggregate_majority(v.annotator_gold);
  v.labels = pad_cyclic(v.gold, T);
  v.segments = feats.segments;
  v.segment_labels = segment_classes(v.gold, cfg.fps);
  v.frames.resize(static_cast<Eigen::Index>(T), feats.frames.cols());
  v.frame_segments.resize(static_cast<Eigen::Index>(T), feats.segments.cols());
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t src = source_index(i, n);
    v.frames.row(static_cast<Eigen::Index>(i)) = feats.frames.row(static_cast<Eigen::Index>(src));
    v.frame_segments.row(static_cast<Eigen::Index>(i)) = feats.segments.row(static_cast<Eigen::Index>(segment_of(src, cfg.fps)));
  }
  const auto spans = segment_spans(n, cfg.fps);
  v.segment_means.resize(static_cast<Eigen::Index>(spans.size()), feats.frames.cols());
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const auto b = static_cast<Eigen::Index>(spans[s].begin);
    const auto len = static_cast<Eigen::Index>(spans[s].end - spans[s].begin);
    v.segment_means.row(static_cast<Eigen::Index>(s)) = feats.frames.middleRows(b, len).colwise().mean();
  }

  if (record) {
    if (record->video_id != e.video_id) throw std::invalid_argument("make_video_input: record for another video");
    if (record->frame_mask.size() != T) throw InputError("intervention record '" + e.video_id + "': mask length differs from max_frames");
    VideoInput::Intervened iv{v.frames, v.frame_segments, record->perturbed_query, std::vector<int>(T, 0)};
    if (record->t == 1) {
      const auto frame_backend = make_backend(cfg.frame_features);
      const auto segment_backend = make_backend(cfg.segment_features);
      const bool needs_pixels =
          cfg.frame_features.kind != ExtractorKind::stub || cfg.segment_features.kind != ExtractorKind::stub;
      std::vector<Frame> clip;
      if (needs_pixels) clip = load_clip(p.manifest, e, cfg);
      const std::string variant = to_string(record->visual_kind);
      for (std::size_t i = 0; i < T; ++i) {
        iv.t[i] = record->frame_t(i);
        if (!record->frame_mask[i]) continue;
        const std::size_t src = source_index(i, n);
        std::vector<Frame> perturbed;
        const std::vector<Frame>* pix = nullptr;
        if (needs_pixels) {
          perturbed = clip;
          perturbed[src] = perturb_frame(clip[src], *record, i, iopts, cfg.norm);
          pix = &perturbed;
        }
        const FrameRef ref{e.video_id, src, variant, pix ? &(*pix)[src] : nullptr};
        iv.frames.row(static_cast<Eigen::Index>(i)) = frame_backend->frame_features(std::span<const FrameRef>(&ref, 1)).row(0);
        iv.frame_segments.row(static_cast<Eigen::Index>(i)) =
            perturbed_segment_row(*segment_backend, e.video_id, n, cfg.fps, src, variant, pix);
      }
    }
    v.intervened = std::move(iv);
  }
  return v;
}

inline std::vector<VideoInput> make_split_inputs(const PreparedDataset& p, Split split,
                                                 const std::vector<InterventionRecord>* records = nullptr,
                                                 const InterventionOptions& iopts = {}) {
  std::map<std::string, const InterventionRecord*> by_id;
  if (records)
    for (const auto& r : *records) by_id[r.video_id] = &r;
  std::vector<VideoInput> out;
  for (const auto& e : p.manifest.entries) {
    if (e.split != split) continue;
    auto it = by_id.find(e.video_id);
    out.push_back(make_video_input(p, e, it == by_id.end() ? nullptr : it->second, iopts));
  }
  return out;
}

inline Vocab training_vocab(const Manifest& m) {
  std::vector<std::string> queries;
  for (const auto& e : m.entries)
    if (e.split == Split::train) queries.push_back(e.query);
  if (queries.empty()) throw InputError("no training-split queries to build a vocabulary from");
  return build_vocab(queries);
}

}  // namespace qvsum
