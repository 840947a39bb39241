#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace avc {

inline constexpr std::size_t kStoreDim = 128;

/// One searchable audio sample.
struct CatalogEntry {
  std::string sample_label;
  std::string category_label;
  std::vector<float> embedding;
};

/// Audio embedding store. File layout (little-endian): "AVE1", u32 entry
/// count, then per entry u32-length-prefixed sample and category labels and
/// 128 float32 values.
class EmbeddingStore {
 public:
  /// Throws Error on a duplicate sample label or a wrong dimension.
  void add(CatalogEntry entry);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<CatalogEntry>& entries() const { return entries_; }
  const CatalogEntry& operator[](std::size_t i) const { return entries_[i]; }

  /// Throws DataError if some embedding's norm differs from 1 by more than tol.
  void check_unit_norm(double tol = 1e-4) const;

  void save(const std::filesystem::path& path) const;
  static EmbeddingStore load(const std::filesystem::path& path);

 private:
  std::vector<CatalogEntry> entries_;
  std::set<std::string> labels_;
};

struct Recommendation {
  std::string sample_label;
  std::string category_label;
  double distance = 0;
};
using RecommendationList = std::vector<Recommendation>;

/// Exact k nearest entries by Euclidean distance, ascending; equal distances
/// are ordered by sample label. Requires 1 <= k <= store size.
RecommendationList topk(const std::vector<float>& query, const EmbeddingStore& store, std::size_t k);

/// Same ranking by descending dot product (cosine for unit vectors); the
/// `distance` field holds the similarity.
RecommendationList topk_cosine(const std::vector<float>& query, const EmbeddingStore& store, std::size_t k);

struct GroundTruth {
  std::set<std::string> sample_labels;
  std::set<std::string> category_labels;
};

bool sample_level_match(const RecommendationList& recs, const GroundTruth& truth);
bool category_level_match(const RecommendationList& recs, const GroundTruth& truth);

/// Percentage rounded to one decimal place.
double percent_tenths(std::size_t hits, std::size_t total);

struct FrameQuery {
  std::string frame_label;
  std::vector<float> embedding;
  GroundTruth truth;
};

struct FrameResult {
  std::string frame_label;
  RecommendationList recommendations;
  bool sample_match = false;
  bool category_match = false;
};

struct RecommendationReport {
  std::size_t k = 0;
  std::vector<FrameResult> frames;
  double sample_accuracy = 0;    // percent, 0.1 granularity
  double category_accuracy = 0;  // percent, 0.1 granularity
};

/// Throws Error if any frame lacks ground truth.
RecommendationReport recommendation_accuracy(const std::vector<FrameQuery>& frames, const EmbeddingStore& store,
                                             std::size_t k);

/// Share of pairs whose predicted class (1 = correlated) equals the label,
/// as a percentage with 0.1 granularity.
double correlation_accuracy(const std::vector<int>& predicted, const std::vector<int>& labels);

}  // namespace avc
