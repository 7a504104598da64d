#pragma once

// Dataset manifests, label conventions and training-ready video records.

#include "qvsum/extract.hpp"
#include "qvsum/frame.hpp"
#include "qvsum/image_io.hpp"
#include "qvsum/json_util.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <istream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace qvsum {

// ---------------------------------------------------------------------------
// Text

inline std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Lowercased whitespace tokens.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(to_lower(std::move(cur)));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(to_lower(std::move(cur)));
  return out;
}

// ---------------------------------------------------------------------------
// Labels

enum class Annotation { Bad = 0, NotGood = 1, Good = 2, VeryGood = 3 };

inline int map_annotation(Annotation a) { return static_cast<int>(a); }

// Accepts "Very Good", "VeryGood", "very_good", ... (case and separators ignored).
inline Annotation parse_annotation(const std::string& label) {
  std::string key;
  for (char c : label)
    if (std::isalpha(static_cast<unsigned char>(c))) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (key == "verygood") return Annotation::VeryGood;
  if (key == "good") return Annotation::Good;
  if (key == "notgood") return Annotation::NotGood;
  if (key == "bad") return Annotation::Bad;
  throw InputError("unknown annotation label '" + label + "'");
}

// Per-frame modal score across annotators; ties go to the higher score.
inline std::vector<int> aggregate_majority(std::span<const std::vector<int>> annotations) {
  if (annotations.empty()) throw std::invalid_argument("aggregate_majority: no annotators");
  const std::size_t n = annotations.front().size();
  for (const auto& a : annotations)
    if (a.size() != n) throw std::invalid_argument("aggregate_majority: annotator vectors differ in length");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<int, kNumClasses> votes{};
    for (const auto& a : annotations) {
      if (a[i] < 0 || a[i] >= kNumClasses) throw std::out_of_range("aggregate_majority: score outside {0..3}");
      ++votes[static_cast<std::size_t>(a[i])];
    }
    int best = kNumClasses - 1;
    for (int c = kNumClasses - 1; c >= 0; --c)
      if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
    out[i] = best;
  }
  return out;
}

inline std::vector<int> aggregate_majority(const std::vector<std::vector<int>>& annotations) {
  return aggregate_majority(std::span<const std::vector<int>>(annotations));
}

// TVSum importance 1..5 onto the four-class scheme.
inline int rebin_tvsum(double s) {
  if (!(s >= 1.0 && s <= 5.0)) throw std::out_of_range("TVSum score " + std::to_string(s) + " outside [1, 5]");
  return static_cast<int>(round_half_up((s - 1.0) * 3.0 / 4.0));
}

// SumMe importance in [0, 1] onto the four-class scheme.
inline int rebin_summe(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw std::out_of_range("SumMe score " + std::to_string(s) + " outside [0, 1]");
  return static_cast<int>(round_half_up(3.0 * s));
}

// ---------------------------------------------------------------------------
// Dataset configuration

enum class DatasetName { queryvs, tvsum, summe, synthetic };
enum class GoldAggregation { majority, max, mean };
enum class Split { train, val, test };

inline std::string to_string(DatasetName d) {
  switch (d) {
    case DatasetName::queryvs: return "queryvs";
    case DatasetName::tvsum: return "tvsum";
    case DatasetName::summe: return "summe";
    case DatasetName::synthetic: return "synthetic";
  }
  return "?";
}

inline DatasetName parse_dataset_name(const std::string& s) {
  if (s == "queryvs") return DatasetName::queryvs;
  if (s == "tvsum") return DatasetName::tvsum;
  if (s == "summe") return DatasetName::summe;
  if (s == "synthetic") return DatasetName::synthetic;
  throw InputError("unknown dataset_name '" + s + "'");
}

inline std::string to_string(GoldAggregation g) {
  switch (g) {
    case GoldAggregation::majority: return "majority";
    case GoldAggregation::max: return "max";
    case GoldAggregation::mean: return "mean";
  }
  return "?";
}

inline GoldAggregation parse_gold_aggregation(const std::string& s) {
  if (s == "majority") return GoldAggregation::majority;
  if (s == "max") return GoldAggregation::max;
  if (s == "mean") return GoldAggregation::mean;
  throw InputError("unknown gold_aggregation '" + s + "'");
}

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw InputError("unknown split '" + s + "' (expected train, val or test)");
}

inline constexpr std::array<Split, 3> kAllSplits{Split::train, Split::val, Split::test};

// Padded frame count fixed for each published dataset.
inline std::optional<std::size_t> required_max_frames(DatasetName d) {
  switch (d) {
    case DatasetName::queryvs: return 199;
    case DatasetName::summe: return 388;
    case DatasetName::tvsum: return 647;
    case DatasetName::synthetic: return std::nullopt;
  }
  return std::nullopt;
}

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

// Published train/val/test sizes.
inline std::optional<SplitSizes> expected_split_sizes(DatasetName d) {
  switch (d) {
    case DatasetName::queryvs: return SplitSizes{114, 38, 38};
    case DatasetName::tvsum: return SplitSizes{40, 5, 5};
    case DatasetName::summe: return SplitSizes{19, 3, 3};
    case DatasetName::synthetic: return std::nullopt;
  }
  return std::nullopt;
}

struct DatasetConfig {
  DatasetName name = DatasetName::synthetic;
  std::size_t max_frames = 199;
  int height = 224;
  int width = 224;
  Normalization norm;
  std::size_t fps = 1;
  std::size_t max_query_words = 0;  // 0 = unlimited
  FeatureExtractorSpec frame_features{ExtractorKind::stub, 512, 1, 0};
  FeatureExtractorSpec segment_features{ExtractorKind::stub, 512, 2, 1};
  GoldAggregation gold_aggregation = GoldAggregation::majority;
};

inline GoldAggregation default_gold_aggregation(DatasetName d) {
  switch (d) {
    case DatasetName::summe: return GoldAggregation::max;
    case DatasetName::tvsum: return GoldAggregation::mean;
    default: return GoldAggregation::majority;
  }
}

inline FeatureExtractorSpec extractor_spec_from_json(const Json& j, FeatureExtractorSpec fallback, const std::string& ctx) {
  require_known_keys(j, {"kind", "out_dim", "clip_len", "seed"}, ctx);
  FeatureExtractorSpec s = fallback;
  if (j.contains("kind")) s.kind = parse_extractor_kind(get_field<std::string>(j, "kind", ctx));
  s.out_dim = get_field_or<std::size_t>(j, "out_dim", s.out_dim, ctx);
  s.clip_len = get_field_or<std::size_t>(j, "clip_len", s.clip_len, ctx);
  s.seed = get_field_or<std::uint64_t>(j, "seed", s.seed, ctx);
  if (s.out_dim == 0) throw InputError(ctx + ": out_dim must be positive");
  if (s.clip_len == 0) throw InputError(ctx + ": clip_len must be positive");
  return s;
}

inline DatasetConfig dataset_config_from_json(const Json& j) {
  const std::string ctx = "dataset config";
  require_known_keys(j, {"dataset_name", "max_frames", "resolution", "mean", "std", "fps", "max_query_words",
                         "frame_features", "segment_features", "gold_aggregation"},
                     ctx);
  DatasetConfig c;
  c.name = parse_dataset_name(get_field<std::string>(j, "dataset_name", ctx));
  c.max_frames = get_field<std::size_t>(j, "max_frames", ctx);
  if (c.max_frames == 0) throw InputError(ctx + ": max_frames must be positive");
  if (auto req = required_max_frames(c.name); req && *req != c.max_frames) {
    throw InputError(ctx + ": max_frames for " + to_string(c.name) + " must be " + std::to_string(*req));
  }
  if (j.contains("resolution")) {
    auto res = get_field<std::vector<int>>(j, "resolution", ctx);
    if (res.size() != 2 || res[0] <= 0 || res[1] <= 0) throw InputError(ctx + ": resolution must be [height, width]");
    c.height = res[0];
    c.width = res[1];
  }
  if (j.contains("mean")) {
    auto m = get_field<std::vector<double>>(j, "mean", ctx);
    if (m.size() != 3) throw InputError(ctx + ": mean needs 3 channels");
    std::copy(m.begin(), m.end(), c.norm.mean.begin());
  }
  if (j.contains("std")) {
    auto s = get_field<std::vector<double>>(j, "std", ctx);
    if (s.size() != 3 || std::any_of(s.begin(), s.end(), [](double v) { return !(v > 0); }))
      throw InputError(ctx + ": std needs 3 positive channels");
    std::copy(s.begin(), s.end(), c.norm.stddev.begin());
  }
  c.fps = get_field_or<std::size_t>(j, "fps", 1, ctx);
  if (c.fps == 0) throw InputError(ctx + ": fps must be positive");
  c.max_query_words = get_field_or<std::size_t>(j, "max_query_words", c.name == DatasetName::queryvs ? 8 : 0, ctx);
  if (j.contains("frame_features")) c.frame_features = extractor_spec_from_json(j["frame_features"], c.frame_features, ctx + ".frame_features");
  if (j.contains("segment_features")) c.segment_features = extractor_spec_from_json(j["segment_features"], c.segment_features, ctx + ".segment_features");
  if (c.frame_features.kind == ExtractorKind::pretrained_3d) throw InputError(ctx + ": frame_features cannot use a 3D backend");
  if (c.segment_features.kind == ExtractorKind::pretrained_2d) throw InputError(ctx + ": segment_features cannot use a 2D backend");
  c.gold_aggregation = j.contains("gold_aggregation")
                           ? parse_gold_aggregation(get_field<std::string>(j, "gold_aggregation", ctx))
                           : default_gold_aggregation(c.name);
  return c;
}

inline OrderedJson to_json(const DatasetConfig& c) {
  OrderedJson j;
  j["dataset_name"] = to_string(c.name);
  j["max_frames"] = c.max_frames;
  j["resolution"] = {c.height, c.width};
  j["mean"] = c.norm.mean;
  j["std"] = c.norm.stddev;
  j["fps"] = c.fps;
  j["max_query_words"] = c.max_query_words;
  j["frame_features"] = to_json(c.frame_features);
  j["segment_features"] = to_json(c.segment_features);
  j["gold_aggregation"] = to_string(c.gold_aggregation);
  return j;
}

// ---------------------------------------------------------------------------
// Manifest: one JSON object per line.

struct ManifestEntry {
  std::string video_id;
  std::string frames_dir;
  std::string query;
  std::vector<std::vector<double>> annotations;  // raw per-annotator values
  Split split = Split::train;
  std::size_t line = 0;  // 1-based source line, 0 if built in memory

  std::size_t length() const { return annotations.empty() ? 0 : annotations.front().size(); }
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // frames_dir paths are resolved against this

  std::filesystem::path frames_path(const ManifestEntry& e) const {
    std::filesystem::path p(e.frames_dir);
    return p.is_absolute() ? p : base_dir / p;
  }
};

inline ManifestEntry parse_manifest_line(const std::string& text, std::size_t line) {
  const std::string ctx = "manifest line " + std::to_string(line);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    throw InputError(ctx + ": invalid JSON");
  }
  require_known_keys(j, {"video_id", "frames_dir", "query", "annotations", "split"}, ctx);
  ManifestEntry e;
  e.line = line;
  e.video_id = get_field<std::string>(j, "video_id", ctx);
  if (e.video_id.empty()) throw InputError(ctx + ": empty video_id");
  const std::string vctx = ctx + " (video '" + e.video_id + "')";
  e.frames_dir = get_field<std::string>(j, "frames_dir", vctx);
  e.query = get_field<std::string>(j, "query", vctx);
  try {
    e.split = parse_split(get_field<std::string>(j, "split", vctx));
  } catch (const InputError& err) {
    throw InputError(vctx + ": " + err.what());
  }
  if (!j.contains("annotations") || !j["annotations"].is_array() || j["annotations"].empty()) {
    throw InputError(vctx + ": annotations must be a non-empty list of score vectors");
  }
  for (const auto& vec : j["annotations"]) {
    if (!vec.is_array() || vec.empty()) throw InputError(vctx + ": each annotation must be a non-empty list");
    std::vector<double> scores;
    for (const auto& v : vec) {
      if (v.is_number()) {
        scores.push_back(v.get<double>());
      } else if (v.is_string()) {
        try {
          scores.push_back(map_annotation(parse_annotation(v.get<std::string>())));
        } catch (const InputError& err) {
          throw InputError(vctx + ": " + err.what());
        }
      } else {
        throw InputError(vctx + ": annotation values must be numbers or label strings");
      }
    }
    e.annotations.push_back(std::move(scores));
  }
  for (const auto& a : e.annotations) {
    if (a.size() != e.annotations.front().size()) {
      throw InputError(vctx + ": annotation length mismatch (" + std::to_string(a.size()) + " vs " +
                       std::to_string(e.annotations.front().size()) + " frames)");
    }
  }
  return e;
}

inline Manifest parse_manifest(std::istream& in, std::filesystem::path base_dir = {}) {
  Manifest m;
  m.base_dir = std::move(base_dir);
  std::string text;
  std::size_t line = 0;
  std::set<std::string> seen;
  while (std::getline(in, text)) {
    ++line;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    ManifestEntry e = parse_manifest_line(text, line);
    if (!seen.insert(e.video_id).second) {
      throw InputError("manifest line " + std::to_string(line) + ": duplicate video_id '" + e.video_id + "'");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

inline OrderedJson to_json(const ManifestEntry& e) {
  OrderedJson j;
  j["video_id"] = e.video_id;
  j["frames_dir"] = e.frames_dir;
  j["query"] = e.query;
  OrderedJson ann = OrderedJson::array();
  for (const auto& a : e.annotations) {
    OrderedJson vec = OrderedJson::array();
    for (double v : a) {
      if (v == std::floor(v) && std::abs(v) < 1e15) {
        vec.push_back(static_cast<long long>(v));
      } else {
        vec.push_back(v);
      }
    }
    ann.push_back(std::move(vec));
  }
  j["annotations"] = std::move(ann);
  j["split"] = to_string(e.split);
  return j;
}

// Canonical form: fixed field order, compact JSON, one entry per line.
inline std::string serialize_manifest(const Manifest& m) {
  std::string out;
  for (const auto& e : m.entries) out += to_json(e).dump() + "\n";
  return out;
}

// Per-annotator class scores {0..3} under the dataset's label convention.
inline std::vector<std::vector<int>> class_annotations(const ManifestEntry& e, DatasetName dataset) {
  std::vector<std::vector<int>> out;
  for (const auto& a : e.annotations) {
    std::vector<int> cls;
    cls.reserve(a.size());
    for (double v : a) {
      switch (dataset) {
        case DatasetName::tvsum: cls.push_back(rebin_tvsum(v)); break;
        case DatasetName::summe: cls.push_back(rebin_summe(v)); break;
        default:
          if (v != std::floor(v) || v < 0 || v > kNumClasses - 1)
            throw std::out_of_range("score " + std::to_string(v) + " is not a class in {0..3}");
          cls.push_back(static_cast<int>(v));
      }
    }
    out.push_back(std::move(cls));
  }
  return out;
}

// Checks that need the dataset config. Errors name the line and video.
inline void validate_manifest(const Manifest& m, const DatasetConfig& cfg) {
  if (m.entries.empty()) throw InputError("manifest has no entries");
  for (const auto& e : m.entries) {
    const std::string ctx = "manifest line " + std::to_string(e.line) + " (video '" + e.video_id + "')";
    if (e.length() > cfg.max_frames) {
      throw InputError(ctx + ": " + std::to_string(e.length()) + " frames exceeds max_frames " +
                       std::to_string(cfg.max_frames));
    }
    try {
      (void)class_annotations(e, cfg.name);
    } catch (const std::out_of_range& err) {
      throw InputError(ctx + ": " + err.what());
    }
    if (cfg.max_query_words > 0 && tokenize(e.query).size() > cfg.max_query_words) {
      throw InputError(ctx + ": query has more than " + std::to_string(cfg.max_query_words) + " words");
    }
  }
}

// ---------------------------------------------------------------------------
// Video records

struct VideoRecord {
  std::string video_id;
  std::vector<Frame> frames;  // normalized, padded to max_frames
  std::size_t original_len = 0;
  std::vector<std::string> query_tokens;
  std::vector<int> gold_scores;  // aggregated, original_len entries
  Split split = Split::train;
};

// Load, resize, normalize and pad one entry's frames.
inline std::vector<Frame> load_clip(const Manifest& m, const ManifestEntry& e, const DatasetConfig& cfg) {
  const auto dir = m.frames_path(e);
  std::vector<Frame> frames;
  frames.reserve(e.length());
  for (std::size_t i = 0; i < e.length(); ++i) {
    const auto path = dir / frame_filename(i);
    if (!std::filesystem::exists(path)) {
      throw InputError("video '" + e.video_id + "': missing frame " + path.string());
    }
    frames.push_back(normalize_frame(resize_bilinear(read_png(path), cfg.height, cfg.width), cfg.norm));
  }
  return frames;
}

inline VideoRecord load_video_record(const Manifest& m, const ManifestEntry& e, const DatasetConfig& cfg) {
  VideoRecord r;
  r.video_id = e.video_id;
  r.original_len = e.length();
  r.frames = repeat_frames(load_clip(m, e, cfg), cfg.max_frames);
  r.query_tokens = tokenize(e.query);
  r.gold_scores = aggregate_majority(class_annotations(e, cfg.name));
  r.split = e.split;
  return r;
}

}  // namespace qvsum
