#pragma once

// Conditional-learning corpus: visual and textual interventions with binary
// intervention labels t. Every draw comes from a stream keyed by
// (global seed, video_id), so records can be rebuilt independently.

#include "qvsum/ingest.hpp"

#include <numeric>
#include <set>

namespace qvsum {

enum class VisualKind { none, salt_pepper, blur };

inline std::string to_string(VisualKind k) {
  switch (k) {
    case VisualKind::none: return "none";
    case VisualKind::salt_pepper: return "salt_pepper";
    case VisualKind::blur: return "blur";
  }
  return "?";
}

inline VisualKind parse_visual_kind(const std::string& s) {
  if (s == "none") return VisualKind::none;
  if (s == "salt_pepper") return VisualKind::salt_pepper;
  if (s == "blur") return VisualKind::blur;
  throw InputError("unknown visual_kind '" + s + "'");
}

struct InterventionOptions {
  double selection_rate = 0.5;  // fraction of (video, query) pairs per split
  double frame_fraction = 0.3;  // flagged frames of a t=1 record
  double salt_pepper_density = 0.05;
  int blur_kernel = 5;
  std::size_t dropped_words = 2;
};

struct InterventionRecord {
  std::string video_id;
  int t = 0;
  std::vector<bool> frame_mask;  // max_frames entries
  VisualKind visual_kind = VisualKind::none;
  std::vector<std::string> perturbed_query;
  std::uint64_t rng_seed = 0;

  // Per-frame intervention label.
  int frame_t(std::size_t i) const { return t == 1 && frame_mask.at(i) ? 1 : 0; }

  friend bool operator==(const InterventionRecord&, const InterventionRecord&) = default;
};

// Choose k of n indices uniformly without replacement (partial Fisher-Yates),
// returned in ascending order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// floor(rate * N) ids per split, independent of manifest order.
inline std::set<std::string> select_intervention_pairs(const Manifest& m, std::uint64_t seed, double rate = 0.5) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("select_intervention_pairs: rate outside [0, 1]");
  std::set<std::string> chosen;
  for (Split split : kAllSplits) {
    std::vector<const ManifestEntry*> members;
    for (const auto& e : m.entries)
      if (e.split == split) members.push_back(&e);
    std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->video_id < b->video_id; });
    const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(members.size())));
    Rng rng(derive_seed(seed, "select/" + to_string(split)));
    for (std::size_t i : sample_without_replacement(members.size(), k, rng)) chosen.insert(members[i]->video_id);
  }
  return chosen;
}

// Each pixel location is hit with probability `density` and set to the
// normalized value of black or white (equal odds) in every channel.
inline Frame apply_salt_pepper(const Frame& frame, double density, std::uint64_t seed, const Normalization& norm = {}) {
  if (!(density >= 0.0 && density <= 1.0)) throw std::invalid_argument("apply_salt_pepper: density outside [0, 1]");
  if (frame.channels != 3) throw std::invalid_argument("apply_salt_pepper: expected 3 channels");
  Frame out = frame;
  Rng rng(seed);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      if (!rng.bernoulli(density)) continue;
      const bool salt = rng.bernoulli(0.5);
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = ((salt ? 1.0 : 0.0) - norm.mean[c]) / norm.stddev[c];
    }
  }
  return out;
}

// Reflect-101 index into [0, n).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

// Box filter of odd width with reflect padding.
inline Frame apply_blur(const Frame& frame, int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw std::invalid_argument("apply_blur: kernel size must be odd and positive, got " + std::to_string(kernel_size));
  }
  if (kernel_size == 1) return frame;
  const int r = kernel_size / 2;
  const double w = 1.0 / (static_cast<double>(kernel_size) * kernel_size);
  Frame out(frame.channels, frame.height, frame.width);
  for (int c = 0; c < frame.channels; ++c)
    for (int y = 0; y < frame.height; ++y)
      for (int x = 0; x < frame.width; ++x) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            acc += frame.at(c, reflect_index(y + dy, frame.height), reflect_index(x + dx, frame.width));
        out.at(c, y, x) = acc * w;
      }
  return out;
}

// Remove k uniformly chosen positions; survivors keep their order.
template <class T>
std::vector<T> drop_words(std::span<const T> tokens, std::size_t k, std::uint64_t seed) {
  if (k == 0) return {tokens.begin(), tokens.end()};
  if (tokens.empty() || k > tokens.size() - 1) {
    throw std::invalid_argument("drop_words: cannot drop " + std::to_string(k) + " of " + std::to_string(tokens.size()) +
                                " words without emptying the query");
  }
  Rng rng(seed);
  const auto dropped = sample_without_replacement(tokens.size(), k, rng);
  std::vector<T> out;
  out.reserve(tokens.size() - k);
  std::size_t d = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (d < dropped.size() && dropped[d] == i) {
      ++d;
      continue;
    }
    out.push_back(tokens[i]);
  }
  return out;
}

template <class T>
std::vector<T> drop_words(const std::vector<T>& tokens, std::size_t k, std::uint64_t seed) {
  return drop_words(std::span<const T>(tokens), k, seed);
}

inline std::size_t flagged_frame_count(std::size_t max_frames, double fraction) {
  return static_cast<std::size_t>(round_half_up(fraction * static_cast<double>(max_frames)));
}

inline InterventionRecord untouched_record(const ManifestEntry& e, std::size_t max_frames, std::uint64_t record_seed) {
  InterventionRecord r;
  r.video_id = e.video_id;
  r.t = 0;
  r.frame_mask.assign(max_frames, false);
  r.visual_kind = VisualKind::none;
  r.perturbed_query = tokenize(e.query);
  r.rng_seed = record_seed;
  return r;
}

inline std::vector<InterventionRecord> build_intervention_dataset(const Manifest& m, std::size_t max_frames,
                                                                  std::uint64_t seed,
                                                                  const InterventionOptions& opts = {}) {
  if (!(opts.frame_fraction >= 0.0 && opts.frame_fraction <= 1.0))
    throw std::invalid_argument("build_intervention_dataset: frame_fraction outside [0, 1]");
  const auto selected = select_intervention_pairs(m, seed, opts.selection_rate);
  std::vector<InterventionRecord> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    const std::uint64_t record_seed = derive_seed(seed, "record/" + e.video_id);
    InterventionRecord r = untouched_record(e, max_frames, record_seed);
    if (selected.count(e.video_id)) {
      Rng rng(record_seed);
      r.t = rng.bernoulli(0.5) ? 1 : 0;
      if (r.t == 1) {
        r.visual_kind = rng.bernoulli(0.5) ? VisualKind::salt_pepper : VisualKind::blur;
        const auto n_flag = flagged_frame_count(max_frames, opts.frame_fraction);
        for (std::size_t i : sample_without_replacement(max_frames, n_flag, rng)) r.frame_mask[i] = true;
        const auto original = tokenize(e.query);
        const std::size_t k = original.empty() ? 0 : std::min(opts.dropped_words, original.size() - 1);
        r.perturbed_query = drop_words(original, k, rng.next());
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

// Perturbation of one flagged frame; the seed depends on the record and the index.
inline Frame perturb_frame(const Frame& normalized, const InterventionRecord& r, std::size_t index,
                           const InterventionOptions& opts, const Normalization& norm) {
  switch (r.visual_kind) {
    case VisualKind::salt_pepper:
      return apply_salt_pepper(normalized, opts.salt_pepper_density,
                               derive_seed(r.rng_seed, "frame/" + std::to_string(index)), norm);
    case VisualKind::blur: return apply_blur(normalized, opts.blur_kernel);
    case VisualKind::none: return normalized;
  }
  return normalized;
}

// Writes <out_dir>/<video_id>/frame_%05d.png for each flagged padded index.
// The original frames are only read.
inline std::size_t write_perturbed_frames(const Manifest& m, const ManifestEntry& e, const DatasetConfig& cfg,
                                          const InterventionRecord& r, const InterventionOptions& opts,
                                          const std::filesystem::path& out_dir) {
  if (r.t == 0) return 0;
  const auto clip = load_clip(m, e, cfg);
  const auto dir = out_dir / e.video_id;
  std::filesystem::create_directories(dir);
  std::size_t written = 0;
  for (std::size_t i = 0; i < r.frame_mask.size(); ++i) {
    if (!r.frame_mask[i]) continue;
    const Frame& src = clip[source_index(i, clip.size())];
    write_png(dir / frame_filename(i), denormalize_frame(perturb_frame(src, r, i, opts, cfg.norm), cfg.norm));
    ++written;
  }
  return written;
}

inline OrderedJson to_json(const InterventionRecord& r) {
  OrderedJson j;
  j["video_id"] = r.video_id;
  j["t"] = r.t;
  OrderedJson mask = OrderedJson::array();
  for (bool b : r.frame_mask) mask.push_back(b);
  j["frame_mask"] = std::move(mask);
  j["visual_kind"] = to_string(r.visual_kind);
  j["perturbed_query"] = r.perturbed_query;
  j["rng_seed"] = r.rng_seed;
  return j;
}

inline InterventionRecord intervention_from_json(const Json& j) {
  const std::string ctx = "intervention record";
  require_known_keys(j, {"video_id", "t", "frame_mask", "visual_kind", "perturbed_query", "rng_seed"}, ctx);
  InterventionRecord r;
  r.video_id = get_field<std::string>(j, "video_id", ctx);
  r.t = get_field<int>(j, "t", ctx);
  if (r.t != 0 && r.t != 1) throw InputError(ctx + ": t must be 0 or 1");
  r.frame_mask = get_field<std::vector<bool>>(j, "frame_mask", ctx);
  r.visual_kind = parse_visual_kind(get_field<std::string>(j, "visual_kind", ctx));
  r.perturbed_query = get_field<std::vector<std::string>>(j, "perturbed_query", ctx);
  r.rng_seed = get_field<std::uint64_t>(j, "rng_seed", ctx);
  return r;
}

inline std::string serialize_interventions(const std::vector<InterventionRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

}  // namespace qvsum
