#pragma once

#include "qvsum/common.hpp"

#include <algorithm>
#include <array>
#include <span>
#include <vector>

namespace qvsum {

// One RGB frame, channel-major (CHW) storage.
struct Frame {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Frame() = default;
  Frame(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

// Channel statistics of the training frames.
struct Normalization {
  std::array<double, 3> mean{0.4280, 0.4106, 0.3589};
  std::array<double, 3> stddev{0.2737, 0.2631, 0.2601};

  friend bool operator==(const Normalization&, const Normalization&) = default;
};

// Pad a clip to `target` frames by cycling from the first frame:
// out[i] = frames[i mod n].
template <class T>
std::vector<T> repeat_frames(std::span<const T> frames, std::size_t target) {
  if (frames.empty()) throw std::invalid_argument("repeat_frames: empty video");
  if (frames.size() > target) {
    throw std::length_error("repeat_frames: video has " + std::to_string(frames.size()) +
                            " frames, more than the padded length " + std::to_string(target));
  }
  std::vector<T> out;
  out.reserve(target);
  for (std::size_t i = 0; i < target; ++i) out.push_back(frames[i % frames.size()]);
  return out;
}

template <class T>
std::vector<T> repeat_frames(const std::vector<T>& frames, std::size_t target) {
  return repeat_frames(std::span<const T>(frames), target);
}

// Source index of padded position i for a clip of n original frames.
inline std::size_t source_index(std::size_t i, std::size_t n) { return i % n; }

inline Frame normalize_frame(const Frame& in, const Normalization& norm = {}) {
  if (in.channels != 3) throw std::invalid_argument("normalize_frame: expected 3 channels, got " + std::to_string(in.channels));
  Frame out = in;
  const std::size_t plane = in.pixels();
  for (int c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      double& v = out.data[static_cast<std::size_t>(c) * plane + p];
      v = (v - norm.mean[c]) / norm.stddev[c];
    }
  }
  return out;
}

inline Frame denormalize_frame(const Frame& in, const Normalization& norm = {}) {
  if (in.channels != 3) throw std::invalid_argument("denormalize_frame: expected 3 channels");
  Frame out = in;
  const std::size_t plane = in.pixels();
  for (int c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      double& v = out.data[static_cast<std::size_t>(c) * plane + p];
      v = v * norm.stddev[c] + norm.mean[c];
    }
  }
  return out;
}

// Bilinear resampling (align-corners off).
inline Frame resize_bilinear(const Frame& in, int height, int width) {
  if (in.height == height && in.width == width) return in;
  Frame out(in.channels, height, width);
  const double sy = static_cast<double>(in.height) / height;
  const double sx = static_cast<double>(in.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, in.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, in.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < in.channels; ++c) {
        const double top = in.at(c, y0, x0) * (1 - wx) + in.at(c, y0, x1) * wx;
        const double bottom = in.at(c, y1, x0) * (1 - wx) + in.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

}  // namespace qvsum
