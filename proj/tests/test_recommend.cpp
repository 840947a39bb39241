#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "avc/core/error.hpp"
#include "avc/core/rng.hpp"
#include "avc/recommend/recommend.hpp"

using namespace avc;

namespace {

std::vector<float> random_unit(RngStream& rng) {
  std::vector<float> v(kStoreDim);
  double n = 0;
  for (auto& x : v) {
    x = float(rng.normal());
    n += double(x) * x;
  }
  for (auto& x : v) x = float(x / std::sqrt(n));
  return v;
}

std::string label(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%05zu", i);
  return buf;
}

EmbeddingStore random_store(std::size_t n, std::size_t n_categories, RngStream& rng) {
  EmbeddingStore store;
  for (std::size_t i = 0; i < n; ++i) {
    store.add({label(i), "c" + std::to_string(i % n_categories), random_unit(rng)});
  }
  return store;
}

// Independent oracle: full sort of (squared distance, label) pairs computed in
// long double.
std::vector<std::string> oracle_topk(const std::vector<float>& q, const EmbeddingStore& store, std::size_t k) {
  std::vector<std::pair<long double, std::string>> all;
  for (const auto& e : store.entries()) {
    long double d = 0;
    for (std::size_t j = 0; j < kStoreDim; ++j) {
      const long double t = (long double)q[j] - (long double)e.embedding[j];
      d += t * t;
    }
    all.emplace_back(d, e.sample_label);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
  return out;
}

std::vector<std::string> labels_of(const RecommendationList& r) {
  std::vector<std::string> out;
  for (const auto& e : r) out.push_back(e.sample_label);
  return out;
}

}  // namespace

TEST_CASE("query equal to a stored embedding ranks it first at distance 0") {
  RngStream rng(1);
  const auto store = random_store(50, 5, rng);
  const auto r = topk(store[17].embedding, store, 3);
  CHECK(r[0].sample_label == store[17].sample_label);
  CHECK(r[0].distance == 0.0);
}

TEST_CASE("k equal to the store size returns everything sorted") {
  RngStream rng(2);
  const auto store = random_store(40, 4, rng);
  const auto q = random_unit(rng);
  const auto r = topk(q, store, 40);
  REQUIRE(r.size() == 40);
  for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i - 1].distance <= r[i].distance);
  auto names = labels_of(r);
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}

TEST_CASE("ties break by sample label") {
  EmbeddingStore store;
  std::vector<float> e(kStoreDim, 0.0f);
  e[0] = 1.0f;
  store.add({"zeta", "a", e});
  store.add({"alpha", "b", e});
  store.add({"mid", "c", e});
  const auto r = topk(e, store, 3);
  CHECK(labels_of(r) == std::vector<std::string>{"alpha", "mid", "zeta"});
}

TEST_CASE("topk rejects bad k and empty stores") {
  RngStream rng(3);
  const auto store = random_store(5, 2, rng);
  const auto q = random_unit(rng);
  CHECK_THROWS_AS(topk(q, store, 0), Error);
  try {
    topk(q, store, 6);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("store of 5 entries") != std::string::npos);
  }
  CHECK_THROWS_AS(topk(q, EmbeddingStore{}, 1), Error);
  CHECK_THROWS_AS(topk(std::vector<float>(3), store, 1), Error);
}

TEST_CASE("store rejects duplicate labels and wrong dimensions") {
  EmbeddingStore store;
  store.add({"a", "x", std::vector<float>(kStoreDim, 0.1f)});
  CHECK_THROWS_AS(store.add({"a", "y", std::vector<float>(kStoreDim, 0.1f)}), Error);
  CHECK_THROWS_AS(store.add({"b", "y", std::vector<float>(7, 0.1f)}), Error);
  CHECK_THROWS_AS(store.check_unit_norm(), DataError);
}

TEST_CASE("1000 entries, k = 10 matches a full-sort oracle") {
  RngStream rng(4);
  const auto store = random_store(1000, 10, rng);
  for (int t = 0; t < 20; ++t) {
    const auto q = random_unit(rng);
    CHECK(labels_of(topk(q, store, 10)) == oracle_topk(q, store, 10));
  }
}

TEST_CASE("Euclidean and cosine rankings agree on unit-norm stores") {
  RngStream rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(300);
    const auto store = random_store(n, 7, rng);
    store.check_unit_norm();
    const auto q = random_unit(rng);
    const std::size_t k = 1 + rng.below(n);
    CHECK(labels_of(topk(q, store, k)) == labels_of(topk_cosine(q, store, k)));
  }
}

TEST_CASE("AVE1 round trip is exact") {
  RngStream rng(6);
  const auto store = random_store(25, 3, rng);
  const auto path = std::filesystem::temp_directory_path() / "avc_test_store.ave";
  store.save(path);
  const auto back = EmbeddingStore::load(path);
  REQUIRE(back.size() == 25);
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(back[i].sample_label == store[i].sample_label);
    CHECK(back[i].category_label == store[i].category_label);
    CHECK(back[i].embedding == store[i].embedding);
  }
  CHECK(std::filesystem::file_size(path) == 8 + 25 * (4 + 6 + 4 + 2 + 128 * 4));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 1);
  CHECK_THROWS_AS(EmbeddingStore::load(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("match predicates") {
  const RecommendationList ab{{"a", "x", 0}, {"b", "y", 0}};
  CHECK(sample_level_match(ab, {{"b"}, {"y"}}));
  CHECK_FALSE(sample_level_match(ab, {{"c"}, {"z"}}));
  CHECK(sample_level_match({{"a", "x", 0}}, {{"a", "q"}, {"x"}}));
  // Same category, different sample.
  CHECK(category_level_match(ab, {{"c"}, {"x"}}));
  CHECK_FALSE(sample_level_match(ab, {{"c"}, {"x"}}));
  CHECK_FALSE(category_level_match(ab, {{"c"}, {"z"}}));
}

TEST_CASE("accuracy percentages") {
  CHECK(percent_tenths(2, 4) == 50.0);
  CHECK(percent_tenths(1, 3) == 33.3);
  CHECK(percent_tenths(2, 3) == 66.7);
  CHECK(correlation_accuracy({1, 1, 1, 1}, {1, 0, 1, 0}) == 50.0);
  CHECK(correlation_accuracy({1, 0, 1, 0}, {1, 0, 1, 0}) == 100.0);
  // Hand-counted fixture: matches at positions 0, 2, 3, 6 -> 4 of 7.
  CHECK(correlation_accuracy({1, 0, 0, 1, 1, 0, 1}, {1, 1, 0, 1, 0, 1, 1}) == 57.1);
  CHECK_THROWS_AS(correlation_accuracy({1}, {1, 0}), Error);
}

TEST_CASE("k = store size with consistent labels gives 100 percent") {
  RngStream rng(7);
  const auto store = random_store(30, 3, rng);
  std::vector<FrameQuery> frames;
  for (std::size_t i = 0; i < 10; ++i) {
    frames.push_back({"f" + std::to_string(i), random_unit(rng), {{store[i].sample_label}, {store[i].category_label}}});
  }
  const auto rep = recommendation_accuracy(frames, store, 30);
  CHECK(rep.sample_accuracy == 100.0);
  CHECK(rep.category_accuracy == 100.0);
  CHECK(rep.frames.size() == 10);
  frames.push_back({"empty", random_unit(rng), {}});
  CHECK_THROWS_AS(recommendation_accuracy(frames, store, 3), Error);
}

TEST_CASE("sample accuracy never exceeds category accuracy") {
  RngStream rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto store = random_store(200, 9, rng);
    std::vector<FrameQuery> frames;
    for (std::size_t i = 0; i < 60; ++i) {
      const auto& gt = store[rng.below(200)];
      frames.push_back({"f" + std::to_string(i), random_unit(rng), {{gt.sample_label}, {gt.category_label}}});
    }
    const auto rep = recommendation_accuracy(frames, store, 1 + rng.below(20));
    CHECK(rep.sample_accuracy <= rep.category_accuracy);
    for (const auto& f : rep.frames) CHECK((!f.sample_match || f.category_match));
  }
}

TEST_CASE("random embeddings over 305 categories hit the analytic null rate") {
  // Random queries make the top-10 a uniform 10-subset of the store, so a
  // frame whose category owns m of n entries matches with probability
  // 1 - C(n - m, 10) / C(n, 10).
  RngStream rng(9);
  const std::size_t n_cat = 305, per_cat = 2, n = n_cat * per_cat, k = 10, n_frames = 3000;
  const auto store = random_store(n, n_cat, rng);
  double miss = 1.0;
  for (std::size_t i = 0; i < k; ++i) miss *= double(n - per_cat - i) / double(n - i);
  const double p = 1.0 - miss;
  std::vector<FrameQuery> frames;
  for (std::size_t i = 0; i < n_frames; ++i) {
    const auto& gt = store[rng.below(n)];
    frames.push_back({"f" + std::to_string(i), random_unit(rng), {{gt.sample_label}, {gt.category_label}}});
  }
  const auto rep = recommendation_accuracy(frames, store, k);
  const double sigma = 100.0 * std::sqrt(p * (1 - p) / double(n_frames));
  CHECK(std::fabs(rep.category_accuracy - 100.0 * p) <= 3 * sigma + 0.05);
}
