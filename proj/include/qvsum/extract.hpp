#pragma once

// Frame-level (2D) and segment-level (3D) visual features behind a pluggable
// backend interface. The built-in stub backend hashes identifiers rather than
// pixels, so the whole pipeline is reproducible without image decoding.

#include "qvsum/frame.hpp"
#include "qvsum/labels.hpp"

#include "json.hpp"

#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>

namespace qvsum {

enum class ExtractorKind { stub, pretrained_2d, pretrained_3d };

inline std::string to_string(ExtractorKind k) {
  switch (k) {
    case ExtractorKind::stub: return "stub";
    case ExtractorKind::pretrained_2d: return "pretrained_2d";
    case ExtractorKind::pretrained_3d: return "pretrained_3d";
  }
  return "?";
}

inline ExtractorKind parse_extractor_kind(const std::string& s) {
  if (s == "stub") return ExtractorKind::stub;
  if (s == "pretrained_2d") return ExtractorKind::pretrained_2d;
  if (s == "pretrained_3d") return ExtractorKind::pretrained_3d;
  throw InputError("unknown feature extractor kind '" + s + "'");
}

struct FeatureExtractorSpec {
  ExtractorKind kind = ExtractorKind::stub;
  std::size_t out_dim = 512;
  std::size_t clip_len = 2;  // 3D only
  std::uint64_t seed = 0;    // stub only

  friend bool operator==(const FeatureExtractorSpec&, const FeatureExtractorSpec&) = default;
};

// A frame identified for feature extraction. `variant` tags a perturbed copy
// (e.g. "salt_pepper"); pixels are only needed by pixel-based backends.
struct FrameRef {
  std::string video_id;
  std::size_t index = 0;
  std::string variant;
  const Frame* pixels = nullptr;
};

class FeatureBackend {
 public:
  virtual ~FeatureBackend() = default;
  virtual Matrix frame_features(std::span<const FrameRef> frames) const = 0;
  virtual Matrix segment_features(std::span<const FrameRef> frames, std::size_t fps) const = 0;
  // Identifies the backend and its settings; part of every cache key.
  virtual std::string fingerprint() const = 0;
};

class StubBackend final : public FeatureBackend {
 public:
  explicit StubBackend(FeatureExtractorSpec spec) : spec_(spec) {
    if (spec_.out_dim == 0) throw InputError("stub extractor: out_dim must be positive");
  }

  Matrix frame_features(std::span<const FrameRef> frames) const override {
    Matrix out(static_cast<Eigen::Index>(frames.size()), static_cast<Eigen::Index>(spec_.out_dim));
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      out.row(static_cast<Eigen::Index>(i)) = hashed_row("frame\x1f" + f.video_id + "\x1f" + std::to_string(f.index) + "\x1f" + f.variant);
    }
    return out;
  }

  Matrix segment_features(std::span<const FrameRef> frames, std::size_t fps) const override {
    const auto spans = segment_spans(frames.size(), fps);
    Matrix out(static_cast<Eigen::Index>(spans.size()), static_cast<Eigen::Index>(spec_.out_dim));
    for (std::size_t s = 0; s < spans.size(); ++s) {
      std::string key = "segment\x1f" + frames[spans[s].begin].video_id;
      for (std::size_t i = spans[s].begin; i < spans[s].end; ++i) key += "\x1f" + std::to_string(frames[i].index) + ":" + frames[i].variant;
      out.row(static_cast<Eigen::Index>(s)) = hashed_row(key);
    }
    return out;
  }

  std::string fingerprint() const override {
    return "stub-v1-d" + std::to_string(spec_.out_dim) + "-s" + std::to_string(spec_.seed);
  }

 private:
  RowVector hashed_row(const std::string& key) const {
    Rng rng(derive_seed(spec_.seed, key));
    RowVector row(static_cast<Eigen::Index>(spec_.out_dim));
    for (Eigen::Index j = 0; j < row.size(); ++j) row(j) = rng.normal();
    return row / row.norm();
  }

  FeatureExtractorSpec spec_;
};

using BackendFactory = std::function<std::unique_ptr<FeatureBackend>(const FeatureExtractorSpec&)>;

namespace detail {
inline std::map<ExtractorKind, BackendFactory>& backend_registry() {
  static std::map<ExtractorKind, BackendFactory> registry;
  return registry;
}
inline std::mutex& backend_registry_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

// Install a pretrained backend (ResNet/C3D wrappers live outside this library).
inline void register_backend(ExtractorKind kind, BackendFactory factory) {
  if (kind == ExtractorKind::stub) throw std::invalid_argument("register_backend: the stub backend is built in");
  std::lock_guard lock(detail::backend_registry_mutex());
  detail::backend_registry()[kind] = std::move(factory);
}

inline void unregister_backend(ExtractorKind kind) {
  std::lock_guard lock(detail::backend_registry_mutex());
  detail::backend_registry().erase(kind);
}

inline std::unique_ptr<FeatureBackend> make_backend(const FeatureExtractorSpec& spec) {
  if (spec.kind == ExtractorKind::stub) return std::make_unique<StubBackend>(spec);
  std::lock_guard lock(detail::backend_registry_mutex());
  auto it = detail::backend_registry().find(spec.kind);
  if (it == detail::backend_registry().end()) {
    throw CapabilityError("feature extractor '" + to_string(spec.kind) +
                          "' is not available in this build; register a backend or use kind \"stub\"");
  }
  return it->second(spec);
}

inline Matrix extract_frame_features(std::span<const FrameRef> frames, const FeatureExtractorSpec& spec) {
  return make_backend(spec)->frame_features(frames);
}

inline Matrix extract_segment_features(std::span<const FrameRef> frames, const FeatureExtractorSpec& spec,
                                       std::size_t fps) {
  return make_backend(spec)->segment_features(frames, fps);
}

// Frame refs 0..n-1 of an unperturbed clip.
inline std::vector<FrameRef> clip_refs(const std::string& video_id, std::size_t n) {
  std::vector<FrameRef> refs(n);
  for (std::size_t i = 0; i < n; ++i) refs[i] = FrameRef{video_id, i, {}, nullptr};
  return refs;
}

// On-disk feature cache. One file per (video_id, backend fingerprint):
//   "QVFC" | u32 version | u32 dtype (1 = f64) | u64 rows | u64 cols
//   | u32 len + fingerprint | u32 len + video_id | rows*cols f64, row-major
class FeatureCache {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::uint32_t kDtypeF64 = 1;

  explicit FeatureCache(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path path_for(const std::string& video_id, const std::string& fingerprint) const {
    std::string safe;
    for (char c : video_id) safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(video_id)));
    return root_ / fingerprint / (safe + "-" + hash + ".bin");
  }

  void store(const std::string& video_id, const std::string& fingerprint, const Matrix& features) const {
    const auto path = path_for(video_id, fingerprint);
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write feature cache " + path.string());
    out.write("QVFC", 4);
    write_pod(out, kVersion);
    write_pod(out, kDtypeF64);
    write_pod(out, static_cast<std::uint64_t>(features.rows()));
    write_pod(out, static_cast<std::uint64_t>(features.cols()));
    write_string(out, fingerprint);
    write_string(out, video_id);
    for (Eigen::Index r = 0; r < features.rows(); ++r)
      for (Eigen::Index c = 0; c < features.cols(); ++c) write_pod(out, features(r, c));
  }

  // Empty when missing or written for a different key.
  std::optional<Matrix> load(const std::string& video_id, const std::string& fingerprint) const {
    std::ifstream in(path_for(video_id, fingerprint), std::ios::binary);
    if (!in) return std::nullopt;
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "QVFC", 4) != 0) return std::nullopt;
    std::uint32_t version = 0, dtype = 0;
    std::uint64_t rows = 0, cols = 0;
    read_pod(in, version);
    read_pod(in, dtype);
    read_pod(in, rows);
    read_pod(in, cols);
    if (!in || version != kVersion || dtype != kDtypeF64) return std::nullopt;
    if (read_string(in) != fingerprint || read_string(in) != video_id) return std::nullopt;
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) read_pod(in, m(r, c));
    if (!in) return std::nullopt;
    return m;
  }

 private:
  template <class T>
  static void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  template <class T>
  static void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
  }
  static void write_string(std::ostream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  static std::string read_string(std::istream& in) {
    std::uint32_t n = 0;
    read_pod(in, n);
    if (!in || n > (1u << 20)) return {};
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
  }

  std::filesystem::path root_;
};

// Frame and segment features for one clip, reading through the cache.
struct ClipFeatures {
  Matrix frames;    // original_len x d2
  Matrix segments;  // num_segments x d3
};

inline ClipFeatures clip_features(const std::string& video_id, std::size_t original_len, std::size_t fps,
                                  const FeatureExtractorSpec& frame_spec, const FeatureExtractorSpec& segment_spec,
                                  const FeatureCache* cache, bool* cache_hit = nullptr) {
  const auto frame_backend = make_backend(frame_spec);
  const auto segment_backend = make_backend(segment_spec);
  const std::string ffp = "frame-" + frame_backend->fingerprint();
  const std::string sfp = "segment-fps" + std::to_string(fps) + "-" + segment_backend->fingerprint();
  ClipFeatures out;
  bool hit = true;
  std::optional<Matrix> f = cache ? cache->load(video_id, ffp) : std::nullopt;
  std::optional<Matrix> s = cache ? cache->load(video_id, sfp) : std::nullopt;
  const auto refs = clip_refs(video_id, original_len);
  if (f && f->rows() == static_cast<Eigen::Index>(original_len)) {
    out.frames = std::move(*f);
  } else {
    hit = false;
    out.frames = frame_backend->frame_features(refs);
    if (cache) cache->store(video_id, ffp, out.frames);
  }
  const auto expected_segments = static_cast<Eigen::Index>(segment_spans(original_len, fps).size());
  if (s && s->rows() == expected_segments) {
    out.segments = std::move(*s);
  } else {
    hit = false;
    out.segments = segment_backend->segment_features(refs, fps);
    if (cache) cache->store(video_id, sfp, out.segments);
  }
  if (cache_hit) *cache_hit = hit;
  return out;
}

inline nlohmann::ordered_json to_json(const FeatureExtractorSpec& s) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(s.kind);
  j["out_dim"] = s.out_dim;
  j["clip_len"] = s.clip_len;
  j["seed"] = s.seed;
  return j;
}

}  // namespace qvsum
