#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "avc/data/feature_bank.hpp"
#include "avc/data/manifest.hpp"
#include "avc/model/encoder.hpp"
#include "avc/recommend/recommend.hpp"

namespace avc {

/// "<video_id>/<second>": the unique label of one audio sample or frame.
std::string item_label(const ManifestEntry& video, std::size_t second);

/// Category of a video; unlabeled videos are their own category.
std::string category_label(const ManifestEntry& video);

std::vector<ItemRef> all_items(const Manifest& manifest);

/// Audio embeddings of every (video, second) of the manifest.
EmbeddingStore build_store(AvModel<float>& model, const FeatureBank& bank, const Manifest& manifest);

/// Every frame of the manifest queried against the store; the ground truth of
/// a frame is its aligned audio sample and its video's category.
RecommendationReport evaluate_recommendations(AvModel<float>& model, const FeatureBank& bank,
                                              const Manifest& manifest, const EmbeddingStore& store, std::size_t k);

/// Embedding of one decoded frame ([3, S, S] values at the model's size).
std::vector<float> embed_frame(AvModel<float>& model, const std::vector<float>& pixels);

struct EvaluationSummary {
  RecommendationReport recommendations;
  double correlation_accuracy = 0;  // percent, 0.1 granularity
  std::size_t correlation_pairs = 0;
};

/// Recommendation report plus correlation accuracy on balanced test pairs
/// (different-category negatives when labeled, different-video otherwise).
EvaluationSummary evaluate(AvModel<float>& model, const FeatureBank& bank, const Manifest& manifest,
                           const EmbeddingStore& store, std::size_t k, std::size_t max_positives,
                           std::uint64_t pair_seed);

/// Pretty-printed JSON with a trailing newline.
std::string recommendations_json(const RecommendationList& recs);
std::string evaluation_json(const EvaluationSummary& summary);

}  // namespace avc
