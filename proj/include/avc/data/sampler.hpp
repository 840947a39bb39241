#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "avc/core/rng.hpp"
#include "avc/data/manifest.hpp"

namespace avc {

enum class PairSource { aligned, diff_label, diff_video, diff_time };
const char* to_string(PairSource s);
PairSource parse_pair_source(const std::string& text);

/// (video index in the manifest, second)
struct ItemRef {
  std::size_t video = 0;
  std::size_t index = 0;
  bool operator==(const ItemRef&) const = default;
};

struct PairRecord {
  ItemRef frame;
  ItemRef audio;
  int y = 0;
  PairSource source = PairSource::aligned;
  bool operator==(const PairRecord&) const = default;
};

inline constexpr std::size_t kMinTimeGap = 2;

/// Up to `per_video` aligned pairs per video, indices drawn without replacement.
std::vector<PairRecord> make_positive_pairs(const Manifest& manifest, std::size_t per_video, RngStream& rng);

/// `count` uncorrelated pairs drawn with the given strategy. Throws DataError
/// if the manifest cannot satisfy it.
std::vector<PairRecord> make_negative_pairs(const Manifest& manifest, PairSource strategy, std::size_t count,
                                            RngStream& rng);

using Batch = std::vector<PairRecord>;

/// Batches of batch_size/2 positives and batch_size/2 negatives in shuffled
/// order; the final partial batch is dropped.
std::vector<Batch> balanced_batches(const std::vector<PairRecord>& positives,
                                    const std::vector<PairRecord>& negatives, std::size_t batch_size,
                                    RngStream& rng);

inline constexpr std::size_t kMaxSlotAttempts = 1000;

/// Batches of N aligned pairs. With category labels no two pairs in a batch
/// share a category, otherwise no two share a video. Slots are filled by
/// rejection sampling from the remaining pool (at most 1000 attempts); the
/// stream ends when a slot cannot be filled.
std::vector<Batch> contrastive_batches(const Manifest& manifest, const std::vector<PairRecord>& positives,
                                       std::size_t n, RngStream& rng);

/// One JSON object per line with paths, indices, label and source.
void write_pairs_jsonl(const std::filesystem::path& path, const Manifest& manifest,
                       const std::vector<PairRecord>& pairs);

}  // namespace avc
