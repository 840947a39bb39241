#include "avc/recommend/recommend.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avc/core/binio.hpp"
#include "avc/core/error.hpp"

namespace avc {

namespace {
constexpr char kStoreMagic[4] = {'A', 'V', 'E', '1'};

void check_query(const std::vector<float>& query, const EmbeddingStore& store, std::size_t k) {
  if (store.empty()) throw Error("topk: the embedding store is empty");
  if (k < 1 || k > store.size()) {
    throw Error("topk: k = " + std::to_string(k) + " must lie in [1, " + std::to_string(store.size()) +
                "] for a store of " + std::to_string(store.size()) + " entries");
  }
  if (query.size() != kStoreDim) {
    throw Error("topk: query has " + std::to_string(query.size()) + " dimensions, expected " +
                std::to_string(kStoreDim));
  }
}

template <class Key, class Better>
RecommendationList rank(const EmbeddingStore& store, std::size_t k, Key key, Better better) {
  std::vector<double> score(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) score[i] = key(store[i].embedding);
  std::vector<std::size_t> order(store.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (score[a] != score[b]) return better(score[a], score[b]);
                      return store[a].sample_label < store[b].sample_label;
                    });
  RecommendationList out;
  out.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    const auto& e = store[order[r]];
    out.push_back({e.sample_label, e.category_label, score[order[r]]});
  }
  return out;
}
}  // namespace

void EmbeddingStore::add(CatalogEntry entry) {
  if (entry.embedding.size() != kStoreDim) {
    throw Error("embedding store: entry '" + entry.sample_label + "' has " +
                std::to_string(entry.embedding.size()) + " dimensions, expected " + std::to_string(kStoreDim));
  }
  if (!labels_.insert(entry.sample_label).second) {
    throw Error("embedding store: duplicate sample label '" + entry.sample_label + "'");
  }
  entries_.push_back(std::move(entry));
}

void EmbeddingStore::check_unit_norm(double tol) const {
  for (const auto& e : entries_) {
    double n = 0;
    for (float v : e.embedding) n += double(v) * v;
    if (std::fabs(std::sqrt(n) - 1.0) > tol) {
      throw DataError("embedding store: entry '" + e.sample_label + "' has norm " + std::to_string(std::sqrt(n)));
    }
  }
}

void EmbeddingStore::save(const std::filesystem::path& path) const {
  binio::Writer w;
  w.bytes(kStoreMagic, 4);
  w.u32(std::uint32_t(entries_.size()));
  for (const auto& e : entries_) {
    w.str(e.sample_label);
    w.str(e.category_label);
    w.bytes(e.embedding.data(), kStoreDim * sizeof(float));
  }
  w.save(path);
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path) {
  binio::Reader r = binio::Reader::load(path);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kStoreMagic)) throw DataError(path.string() + " is not an AVE1 embedding store");
  const std::uint32_t n = r.u32();
  EmbeddingStore store;
  for (std::uint32_t i = 0; i < n; ++i) {
    CatalogEntry e;
    e.sample_label = r.str();
    e.category_label = r.str();
    e.embedding.resize(kStoreDim);
    r.bytes(e.embedding.data(), kStoreDim * sizeof(float));
    try {
      store.add(std::move(e));
    } catch (const Error& err) {
      throw DataError(path.string() + ": " + err.what());
    }
  }
  if (!r.at_end()) throw DataError(path.string() + ": trailing bytes after " + std::to_string(n) + " entries");
  return store;
}

RecommendationList topk(const std::vector<float>& query, const EmbeddingStore& store, std::size_t k) {
  check_query(query, store, k);
  return rank(
      store, k,
      [&](const std::vector<float>& e) {
        double d = 0;
        for (std::size_t j = 0; j < kStoreDim; ++j) {
          const double t = double(query[j]) - double(e[j]);
          d += t * t;
        }
        return std::sqrt(d);
      },
      [](double a, double b) { return a < b; });
}

RecommendationList topk_cosine(const std::vector<float>& query, const EmbeddingStore& store, std::size_t k) {
  check_query(query, store, k);
  return rank(
      store, k,
      [&](const std::vector<float>& e) {
        double s = 0;
        for (std::size_t j = 0; j < kStoreDim; ++j) s += double(query[j]) * double(e[j]);
        return s;
      },
      [](double a, double b) { return a > b; });
}

bool sample_level_match(const RecommendationList& recs, const GroundTruth& truth) {
  return std::any_of(recs.begin(), recs.end(),
                     [&](const Recommendation& r) { return truth.sample_labels.count(r.sample_label) > 0; });
}

bool category_level_match(const RecommendationList& recs, const GroundTruth& truth) {
  return std::any_of(recs.begin(), recs.end(),
                     [&](const Recommendation& r) { return truth.category_labels.count(r.category_label) > 0; });
}

double percent_tenths(std::size_t hits, std::size_t total) {
  if (total == 0) return 0.0;
  return double(std::llround(1000.0 * double(hits) / double(total))) / 10.0;
}

RecommendationReport recommendation_accuracy(const std::vector<FrameQuery>& frames, const EmbeddingStore& store,
                                             std::size_t k) {
  RecommendationReport report;
  report.k = k;
  std::size_t sample_hits = 0, category_hits = 0;
  for (const auto& f : frames) {
    if (f.truth.sample_labels.empty() && f.truth.category_labels.empty()) {
      throw Error("recommendation_accuracy: frame '" + f.frame_label + "' has no ground truth");
    }
    FrameResult r;
    r.frame_label = f.frame_label;
    r.recommendations = topk(f.embedding, store, k);
    r.sample_match = sample_level_match(r.recommendations, f.truth);
    r.category_match = category_level_match(r.recommendations, f.truth);
    sample_hits += r.sample_match;
    category_hits += r.category_match;
    report.frames.push_back(std::move(r));
  }
  report.sample_accuracy = percent_tenths(sample_hits, frames.size());
  report.category_accuracy = percent_tenths(category_hits, frames.size());
  return report;
}

double correlation_accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (predicted.size() != labels.size()) {
    throw Error("correlation_accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                std::to_string(labels.size()) + " labels");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return percent_tenths(hits, labels.size());
}

}  // namespace avc
