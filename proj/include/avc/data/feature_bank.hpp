#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "avc/core/tensor.hpp"
#include "avc/data/manifest.hpp"
#include "avc/data/sampler.hpp"

namespace avc {

/// In-memory encoder inputs for every (video, second) of a manifest: frames
/// [3, S, S] in [-1, 1] and 64x100 log-mel features.
///
/// Frame paths ending in ".avf" are read as AVF1 arrays [3, s, s] with s a
/// multiple of S; other frames are decoded, resized to 224 and box-reduced to
/// S. Audio paths ending in ".avf" hold [64, 100] arrays; others are WAV
/// segments whose first second is featurized.
class FeatureBank {
 public:
  static constexpr std::size_t kMelValues = 64 * 100;

  /// `threads` = 0 picks the hardware concurrency. Results do not depend on it.
  FeatureBank(const Manifest& manifest, std::size_t visual_size, std::size_t threads = 0);

  std::size_t visual_size() const { return visual_size_; }
  std::size_t frame_values() const { return 3 * visual_size_ * visual_size_; }
  std::size_t items() const { return offsets_.empty() ? 0 : offsets_.back(); }

  std::span<const float> frame(const ItemRef& ref) const;
  std::span<const float> mel(const ItemRef& ref) const;

  template <class T>
  Tensor<T> frames(const std::vector<ItemRef>& refs) const;
  template <class T>
  Tensor<T> mels(const std::vector<ItemRef>& refs) const;

 private:
  std::size_t slot(const ItemRef& ref) const;

  std::size_t visual_size_;
  std::vector<std::size_t> offsets_;  // per video, prefix sums of seconds()
  std::vector<float> frames_;
  std::vector<float> mels_;
};

/// Writes AVF1 files features/<video>/<i>.frame.avf ([3, S, S]) and
/// <i>.mel.avf ([64, 100]) under `out_dir` plus a manifest.jsonl that points
/// at them; returns that manifest.
Manifest featurize(const Manifest& manifest, const std::filesystem::path& out_dir, std::size_t visual_size,
                   std::size_t threads = 0);

/// Decodes one frame at `visual_size` (see FeatureBank for the rules).
std::vector<float> load_frame_features(const std::filesystem::path& path, std::size_t visual_size);

}  // namespace avc
