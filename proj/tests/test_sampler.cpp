#include <doctest.h>

#include <json.hpp>

#include <fstream>
#include <map>
#include <set>

#include "avc/core/error.hpp"
#include "avc/data/manifest.hpp"
#include "avc/data/sampler.hpp"
#include "test_util.hpp"

using namespace avc;

namespace {

Manifest make_manifest(const std::vector<std::pair<std::string, std::size_t>>& videos, bool labels = true,
                       std::size_t per_category = 1) {
  Manifest m;
  m.base_dir = "/data";
  for (std::size_t v = 0; v < videos.size(); ++v) {
    ManifestEntry e;
    e.video_id = videos[v].first;
    if (labels) e.category = "cat" + std::to_string(v / per_category);
    for (std::size_t s = 0; s < videos[v].second; ++s) {
      e.frames.push_back(e.video_id + "/f" + std::to_string(s) + ".png");
      e.audio_segments.push_back(e.video_id + "/a" + std::to_string(s) + ".wav");
    }
    m.videos.push_back(std::move(e));
  }
  return m;
}

Manifest category_manifest(std::size_t categories, std::size_t videos_per_cat, std::size_t seconds) {
  std::vector<std::pair<std::string, std::size_t>> vids;
  for (std::size_t i = 0; i < categories * videos_per_cat; ++i) vids.emplace_back("v" + std::to_string(i), seconds);
  return make_manifest(vids, true, videos_per_cat);
}

}  // namespace

TEST_SUITE("manifest") {
  TEST_CASE("JSON-lines round trip and relative path resolution") {
    testing::TempDir dir("manifest");
    Manifest m = make_manifest({{"a", 2}, {"b", 3}});
    m.videos[1].category.reset();
    write_manifest(dir / "m.jsonl", m);
    Manifest back = read_manifest(dir / "m.jsonl");
    REQUIRE(back.videos.size() == 2);
    CHECK(back.videos[0].category == std::optional<std::string>("cat0"));
    CHECK_FALSE(back.videos[1].category.has_value());
    CHECK(back.videos[1].audio_segments == m.videos[1].audio_segments);
    CHECK(back.resolve("a/f0.png") == dir.path() / "a/f0.png");
    CHECK(back.resolve("/abs/x.png") == std::filesystem::path("/abs/x.png"));
    CHECK_FALSE(back.has_labels());
  }

  TEST_CASE("malformed manifests are data errors") {
    testing::TempDir dir("manifest");
    {
      std::ofstream(dir / "bad.jsonl") << "{\"video_id\": \"x\"}\n";
    }
    CHECK_THROWS_AS(read_manifest(dir / "bad.jsonl"), DataError);
    {
      std::ofstream(dir / "empty.jsonl") << "{\"video_id\": \"x\", \"frames\": [], \"audio_segments\": []}\n";
    }
    CHECK_THROWS_AS(read_manifest(dir / "empty.jsonl"), DataError);
    CHECK_THROWS_AS(read_manifest(dir / "missing.jsonl"), DataError);
    Manifest dup = make_manifest({{"a", 1}, {"a", 1}});
    CHECK_THROWS_AS(validate_manifest(dup), DataError);
  }

  TEST_CASE("video split keeps videos whole and stratifies categories") {
    Manifest m = category_manifest(4, 10, 2);
    auto split = split_by_video(m, 0.2, 0.2, 3);
    CHECK(split.train.videos.size() == 24);
    CHECK(split.val.videos.size() == 8);
    CHECK(split.test.videos.size() == 8);
    std::set<std::string> seen;
    for (const Manifest* part : {&split.train, &split.val, &split.test}) {
      std::map<std::string, int> per_cat;
      for (const auto& v : part->videos) {
        CHECK(seen.insert(v.video_id).second);
        ++per_cat[*v.category];
      }
      CHECK(per_cat.size() == 4);
    }
    auto again = split_by_video(m, 0.2, 0.2, 3);
    for (std::size_t i = 0; i < split.test.videos.size(); ++i) {
      CHECK(again.test.videos[i].video_id == split.test.videos[i].video_id);
    }
  }
}

TEST_SUITE("positive pairs") {
  TEST_CASE("ten-second video with per_video 10 gives every aligned pair") {
    Manifest m = make_manifest({{"v", 10}});
    RngStream rng(1);
    auto pairs = make_positive_pairs(m, 10, rng);
    REQUIRE(pairs.size() == 10);
    std::set<std::size_t> idx;
    for (const auto& p : pairs) idx.insert(p.frame.index);
    CHECK(idx.size() == 10);
  }

  TEST_CASE("pairs are aligned, labelled 1 and capped by the video length") {
    Manifest m = make_manifest({{"a", 3}, {"b", 8}});
    RngStream rng(2);
    auto pairs = make_positive_pairs(m, 5, rng);
    CHECK(pairs.size() == 8);
    for (const auto& p : pairs) {
      CHECK(p.frame == p.audio);
      CHECK(p.y == 1);
      CHECK(p.source == PairSource::aligned);
    }
  }

  TEST_CASE("fixed seed reproduces the selection") {
    Manifest m = make_manifest({{"a", 30}, {"b", 30}});
    RngStream r1(7), r2(7);
    CHECK(make_positive_pairs(m, 4, r1) == make_positive_pairs(m, 4, r2));
  }
}

TEST_SUITE("negative pairs") {
  TEST_CASE("diff_label never shares the frame's category") {
    Manifest m = category_manifest(3, 2, 5);
    RngStream rng(3);
    for (const auto& p : make_negative_pairs(m, PairSource::diff_label, 500, rng)) {
      CHECK(m.videos[p.frame.video].category != m.videos[p.audio.video].category);
      CHECK(p.y == 0);
    }
  }

  TEST_CASE("diff_time keeps a gap of at least two seconds") {
    Manifest m = make_manifest({{"a", 3}, {"b", 1}, {"c", 12}});
    RngStream rng(4);
    for (const auto& p : make_negative_pairs(m, PairSource::diff_time, 500, rng)) {
      CHECK(p.frame.video == p.audio.video);
      const std::size_t gap = p.frame.index > p.audio.index ? p.frame.index - p.audio.index
                                                            : p.audio.index - p.frame.index;
      CHECK(gap >= 2);
    }
  }

  TEST_CASE("diff_video over two videos always crosses videos") {
    Manifest m = make_manifest({{"a", 4}, {"b", 4}});
    RngStream rng(5);
    auto pairs = make_negative_pairs(m, PairSource::diff_video, 1000, rng);
    std::size_t crossed = 0;
    for (const auto& p : pairs) crossed += m.videos[p.frame.video].video_id != m.videos[p.audio.video].video_id;
    CHECK(crossed == 1000);
  }

  TEST_CASE("no negative is temporally aligned within a video") {
    Manifest m = category_manifest(2, 2, 6);
    RngStream rng(6);
    for (auto s : {PairSource::diff_label, PairSource::diff_video, PairSource::diff_time}) {
      for (const auto& p : make_negative_pairs(m, s, 300, rng)) CHECK_FALSE(p.frame == p.audio);
    }
  }

  TEST_CASE("unsatisfiable strategies are rejected") {
    RngStream rng(7);
    Manifest one_cat = category_manifest(1, 3, 4);
    try {
      make_negative_pairs(one_cat, PairSource::diff_label, 1, rng);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("cat0") != std::string::npos);
    }
    CHECK_THROWS_AS(make_negative_pairs(make_manifest({{"a", 5}}, false), PairSource::diff_label, 1, rng), DataError);
    CHECK_THROWS_AS(make_negative_pairs(make_manifest({{"a", 5}}), PairSource::diff_video, 1, rng), DataError);
    CHECK_THROWS_AS(make_negative_pairs(make_manifest({{"a", 2}, {"b", 1}}), PairSource::diff_time, 1, rng),
                    DataError);
  }
}

TEST_SUITE("balanced batches") {
  TEST_CASE("100 positives and 100 negatives in batches of 20") {
    Manifest m = category_manifest(4, 5, 5);
    RngStream rng(8);
    auto pos = make_positive_pairs(m, 5, rng);
    auto neg = make_negative_pairs(m, PairSource::diff_label, 100, rng);
    REQUIRE(pos.size() == 100);
    auto batches = balanced_batches(pos, neg, 20, rng);
    REQUIRE(batches.size() == 10);
    for (const auto& b : batches) {
      REQUIRE(b.size() == 20);
      int ones = 0;
      for (const auto& p : b) ones += p.y;
      CHECK(ones == 10);
      CHECK(double(ones) / double(b.size()) == 0.5);
    }
  }

  TEST_CASE("partial final batch is dropped and order is reproducible") {
    Manifest m = category_manifest(2, 2, 7);
    RngStream a(9);
    auto pos = make_positive_pairs(m, 7, a);
    auto neg = make_negative_pairs(m, PairSource::diff_time, 27, a);
    pos = std::vector<PairRecord>(pos.begin(), pos.begin() + 25);
    auto x = balanced_batches(pos, neg, 8, a);
    CHECK(x.size() == 6);
    RngStream c(9);
    auto pos2 = make_positive_pairs(m, 7, c);
    auto neg2 = make_negative_pairs(m, PairSource::diff_time, 27, c);
    pos2 = std::vector<PairRecord>(pos2.begin(), pos2.begin() + 25);
    CHECK(balanced_batches(pos2, neg2, 8, c) == x);
  }

  TEST_CASE("odd batch size is an error") {
    RngStream rng(1);
    CHECK_THROWS_AS(balanced_batches({}, {}, 7, rng), Error);
  }
}

TEST_SUITE("contrastive batches") {
  TEST_CASE("two categories with N = 2 always differ") {
    Manifest m = category_manifest(2, 3, 4);
    RngStream rng(10);
    auto batches = contrastive_batches(m, make_positive_pairs(m, 4, rng), 2, rng);
    CHECK(batches.size() >= 5);
    for (const auto& b : batches) CHECK(m.videos[b[0].frame.video].category != m.videos[b[1].frame.video].category);
  }

  TEST_CASE("eight categories with N = 8 give category permutations") {
    Manifest m = category_manifest(8, 4, 5);
    RngStream rng(11);
    auto pos = make_positive_pairs(m, 5, rng);
    auto batches = contrastive_batches(m, pos, 8, rng);
    CHECK(batches.size() >= 10);
    for (const auto& b : batches) {
      REQUIRE(b.size() == 8);
      std::set<std::string> cats;
      for (const auto& p : b) {
        cats.insert(*m.videos[p.frame.video].category);
        CHECK(p.y == 1);
      }
      CHECK(cats == std::set<std::string>{"cat0", "cat1", "cat2", "cat3", "cat4", "cat5", "cat6", "cat7"});
    }
  }

  TEST_CASE("each pair is used at most once per stream") {
    Manifest m = category_manifest(4, 3, 6);
    RngStream rng(12);
    auto pos = make_positive_pairs(m, 6, rng);
    auto batches = contrastive_batches(m, pos, 3, rng);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& b : batches) {
      for (const auto& p : b) CHECK(seen.insert({p.frame.video, p.frame.index}).second);
    }
  }

  TEST_CASE("unlabelled manifests keep videos distinct") {
    Manifest m = make_manifest({{"a", 5}, {"b", 5}, {"c", 5}}, false);
    RngStream rng(13);
    for (const auto& b : contrastive_batches(m, make_positive_pairs(m, 5, rng), 3, rng)) {
      CHECK(std::set<std::size_t>{b[0].frame.video, b[1].frame.video, b[2].frame.video}.size() == 3);
    }
  }

  TEST_CASE("too few categories names them in the error") {
    Manifest m = category_manifest(2, 2, 3);
    RngStream rng(14);
    auto pos = make_positive_pairs(m, 3, rng);
    try {
      contrastive_batches(m, pos, 3, rng);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("cat0") != std::string::npos);
      CHECK(msg.find("cat1") != std::string::npos);
    }
  }

  TEST_CASE("stream is reproducible") {
    Manifest m = category_manifest(4, 3, 6);
    RngStream a(15), b(15);
    auto x = contrastive_batches(m, make_positive_pairs(m, 6, a), 4, a);
    auto y = contrastive_batches(m, make_positive_pairs(m, 6, b), 4, b);
    CHECK(x == y);
  }
}

TEST_SUITE("pair records") {
  TEST_CASE("JSON lines carry paths, label and source") {
    testing::TempDir dir("pairs");
    Manifest m = category_manifest(2, 1, 4);
    RngStream rng(16);
    auto neg = make_negative_pairs(m, PairSource::diff_label, 3, rng);
    write_pairs_jsonl(dir / "p.jsonl", m, neg);
    std::ifstream in(dir / "p.jsonl");
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
      auto j = nlohmann::json::parse(line);
      CHECK(j["y"] == 0);
      CHECK(j["source"] == "diff_label");
      CHECK(j["category"] != j["audio_category"]);
      CHECK(j["frame"].get<std::string>().find(".png") != std::string::npos);
      ++rows;
    }
    CHECK(rows == 3);
  }
}
