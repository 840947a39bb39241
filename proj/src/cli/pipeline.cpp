#include "avc/cli/pipeline.hpp"

#include <json.hpp>

#include "avc/core/error.hpp"
#include "avc/train/trainer.hpp"

namespace avc {

using nlohmann::ordered_json;

std::string item_label(const ManifestEntry& video, std::size_t second) {
  return video.video_id + "/" + std::to_string(second);
}

std::string category_label(const ManifestEntry& video) { return video.category.value_or(video.video_id); }

std::vector<ItemRef> all_items(const Manifest& manifest) {
  std::vector<ItemRef> out;
  for (std::size_t v = 0; v < manifest.videos.size(); ++v) {
    for (std::size_t i = 0; i < manifest.videos[v].seconds(); ++i) out.push_back({v, i});
  }
  return out;
}

EmbeddingStore build_store(AvModel<float>& model, const FeatureBank& bank, const Manifest& manifest) {
  const auto items = all_items(manifest);
  const auto emb = embed_items(model, bank, items, Stream::audio);
  EmbeddingStore store;
  for (std::size_t n = 0; n < items.size(); ++n) {
    const auto& video = manifest.videos[items[n].video];
    store.add({item_label(video, items[n].index), category_label(video), emb[n]});
  }
  return store;
}

RecommendationReport evaluate_recommendations(AvModel<float>& model, const FeatureBank& bank,
                                              const Manifest& manifest, const EmbeddingStore& store, std::size_t k) {
  const auto items = all_items(manifest);
  const auto emb = embed_items(model, bank, items, Stream::visual);
  std::vector<FrameQuery> queries;
  for (std::size_t n = 0; n < items.size(); ++n) {
    const auto& video = manifest.videos[items[n].video];
    const std::string label = item_label(video, items[n].index);
    queries.push_back({label, emb[n], {{label}, {category_label(video)}}});
  }
  return recommendation_accuracy(queries, store, k);
}

std::vector<float> embed_frame(AvModel<float>& model, const std::vector<float>& pixels) {
  const std::size_t s = model.config().encoder.visual_size;
  if (pixels.size() != 3 * s * s) throw DataError("embed_frame: frame does not match the model's input size");
  NoGradGuard guard;
  const Tensor<float> e = model.embed_visual(Tensor<float>::from({1, 3, s, s}, pixels), Mode::eval);
  const auto v = e.data();
  return {v.begin(), v.end()};
}

EvaluationSummary evaluate(AvModel<float>& model, const FeatureBank& bank, const Manifest& manifest,
                           const EmbeddingStore& store, std::size_t k, std::size_t max_positives,
                           std::uint64_t pair_seed) {
  EvaluationSummary out;
  out.recommendations = evaluate_recommendations(model, bank, manifest, store, k);
  const PairSource negatives = manifest.has_labels() ? PairSource::diff_label : PairSource::diff_video;
  const auto pairs = evaluation_pairs(manifest, negatives, max_positives, pair_seed);
  std::vector<int> labels;
  for (const auto& p : pairs) labels.push_back(p.y);
  out.correlation_accuracy = correlation_accuracy(predict_correlation(model, bank, pairs), labels);
  out.correlation_pairs = pairs.size();
  return out;
}

namespace {

ordered_json to_json(const RecommendationList& recs) {
  ordered_json a = ordered_json::array();
  for (const auto& r : recs) {
    a.push_back({{"sample", r.sample_label}, {"category", r.category_label}, {"distance", r.distance}});
  }
  return a;
}

}  // namespace

std::string recommendations_json(const RecommendationList& recs) { return to_json(recs).dump(2) + "\n"; }

std::string evaluation_json(const EvaluationSummary& summary) {
  const auto& rep = summary.recommendations;
  ordered_json frames = ordered_json::array();
  for (const auto& f : rep.frames) {
    frames.push_back({{"frame", f.frame_label},
                      {"sample_match", f.sample_match},
                      {"category_match", f.category_match},
                      {"recommendations", to_json(f.recommendations)}});
  }
  ordered_json j;
  j["k"] = rep.k;
  j["frames_evaluated"] = rep.frames.size();
  j["sample_accuracy"] = rep.sample_accuracy;
  j["category_accuracy"] = rep.category_accuracy;
  j["correlation_accuracy"] = summary.correlation_accuracy;
  j["correlation_pairs"] = summary.correlation_pairs;
  j["frames"] = std::move(frames);
  return j.dump(2) + "\n";
}

}  // namespace avc
