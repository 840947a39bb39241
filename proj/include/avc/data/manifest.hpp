#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace avc {

/// One video: frame i and audio segment i cover second i.
struct ManifestEntry {
  std::string video_id;
  std::optional<std::string> category;
  std::vector<std::string> frames;
  std::vector<std::string> audio_segments;

  /// Seconds usable for pairing (the shorter of the two lists).
  std::size_t seconds() const { return std::min(frames.size(), audio_segments.size()); }
};

/// JSON-lines manifest: {"video_id", "category" (optional), "frames": [...],
/// "audio_segments": [...]} per line. Relative paths are resolved against the
/// manifest's directory.
struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> videos;

  std::filesystem::path resolve(const std::string& path) const;
  bool has_labels() const;
  /// Sorted distinct category labels.
  std::vector<std::string> categories() const;
  std::size_t find_video(const std::string& video_id) const;  // npos when absent
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
/// Throws DataError on empty lists, duplicate ids or an empty manifest.
void validate_manifest(const Manifest& manifest);

struct ManifestSplit {
  Manifest train, val, test;
};

/// Per-category shuffled split of whole videos (no video straddles splits).
/// Unlabeled manifests are split as a single group.
ManifestSplit split_by_video(const Manifest& manifest, double val_fraction, double test_fraction,
                             std::uint64_t seed);

}  // namespace avc
