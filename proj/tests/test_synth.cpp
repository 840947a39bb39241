#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "avc/data/sampler.hpp"
#include "avc/feat/mel.hpp"
#include "avc/synth/synth.hpp"

using namespace avc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("avc_test_synth_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SynthSpec small_spec() {
  SynthSpec s;
  s.n_classes = 4;
  s.clips_per_class = 2;
  s.seconds_per_clip = 3;
  s.seed = 11;
  s.image_size = 48;
  return s;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

}  // namespace

TEST_CASE("same seed gives a byte-identical dataset for any thread count") {
  const auto a = scratch("det_a"), b = scratch("det_b");
  generate(small_spec(), a, 1);
  generate(small_spec(), b, 3);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    REQUIRE(fs::exists(b / rel));
    CHECK(slurp(e.path()) == slurp(b / rel));
    ++files;
  }
  CHECK(files == 4 * 2 * 3 * 2 + 2);  // frames + segments + manifest + spec
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("different seeds give different frames") {
  const auto a = scratch("seed_a"), b = scratch("seed_b");
  SynthSpec s = small_spec();
  generate(s, a);
  s.seed = 12;
  generate(s, b);
  CHECK(slurp(a / "frames/c0_0000/0.png") != slurp(b / "frames/c0_0000/0.png"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("manifest layout and sampler compatibility") {
  const auto dir = scratch("manifest");
  const Manifest m = generate(small_spec(), dir);
  const Manifest back = read_manifest(dir / "manifest.jsonl");
  REQUIRE(back.videos.size() == 8);
  validate_manifest(back);
  CHECK(back.categories() == std::vector<std::string>{"0", "1", "2", "3"});
  for (std::size_t i = 0; i < back.videos.size(); ++i) {
    const auto& v = back.videos[i];
    CHECK(v.video_id == m.videos[i].video_id);
    CHECK(v.frames.size() == 3);
    CHECK(v.audio_segments.size() == 3);
    for (const auto& f : v.frames) CHECK(fs::exists(back.resolve(f)));
  }
  CHECK(back.videos[3].video_id == "c1_0001");
  CHECK(*back.videos[3].category == "1");

  RngStream rng(5);
  const auto pos = make_positive_pairs(back, 3, rng);
  CHECK(pos.size() == 24);
  for (auto src : {PairSource::diff_label, PairSource::diff_video, PairSource::diff_time}) {
    const auto neg = make_negative_pairs(back, src, 24, rng);
    CHECK(neg.size() == 24);
  }
  const auto batches = contrastive_batches(back, pos, 4, rng);
  CHECK(!batches.empty());
  fs::remove_all(dir);
}

TEST_CASE("spec key-value round trip") {
  SynthSpec s = small_spec();
  s.audio_snr_db = 17.5;
  const SynthSpec t = SynthSpec::from_kv(KeyValues::parse(s.to_kv().to_text()));
  CHECK(t.n_classes == s.n_classes);
  CHECK(t.clips_per_class == s.clips_per_class);
  CHECK(t.seconds_per_clip == s.seconds_per_clip);
  CHECK(t.seed == s.seed);
  CHECK(t.audio_snr_db == s.audio_snr_db);
  CHECK(t.image_size == s.image_size);
  CHECK_THROWS(SynthSpec::from_kv(KeyValues::parse("n_classes = 1\n")));
  CHECK_THROWS(SynthSpec::from_kv(KeyValues::parse("colour = red\n")));
}

TEST_CASE("class tones are a quarter octave apart") {
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(class_tone_hz(k) == doctest::Approx(220.0 * std::pow(2.0, k / 4.0)).epsilon(1e-12));
  }
  double min_ratio = 1e9;
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = i + 1; j < 8; ++j) min_ratio = std::min(min_ratio, class_tone_hz(j) / class_tone_hz(i));
  }
  CHECK(min_ratio == doctest::Approx(std::pow(2.0, 0.25)).epsilon(1e-12));
}

TEST_CASE("class styles are distinct") {
  std::set<std::pair<int, std::array<std::uint8_t, 3>>> seen;
  for (std::size_t k = 0; k < 8; ++k) {
    const auto s = class_style(k, 8);
    CHECK(int(s.shape) == int(k % 4));
    seen.insert({int(s.shape), s.color});
  }
  CHECK(seen.size() == 8);
}

TEST_CASE("rendered frame contains the class colour") {
  SynthSpec s = small_spec();
  s.image_size = 64;
  for (std::size_t k = 0; k < 4; ++k) {
    RngStream rng(k);
    const RgbImage img = render_frame(s, k, rng);
    REQUIRE(img.height == 64);
    const auto want = class_style(k, s.n_classes).color;
    // The centre pixel is inside every shape except the ring.
    if (class_style(k, s.n_classes).shape == SynthShape::ring) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(std::abs(int(img.at(32, 32, c)) - int(want[c])) <= 30);
    }
  }
}

TEST_CASE("segment SNR matches the spec") {
  SynthSpec s = small_spec();
  s.audio_snr_db = 20.0;
  RngStream rng(3);
  const AudioClip noisy = render_segment(s, 2, rng);
  s.audio_snr_db = 300.0;
  RngStream rng2(3);
  const AudioClip clean = render_segment(s, 2, rng2);
  double ps = 0, pn = 0;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    ps += double(clean.samples[i]) * clean.samples[i];
    const double n = double(noisy.samples[i]) - clean.samples[i];
    pn += n * n;
  }
  CHECK(10.0 * std::log10(ps / pn) == doctest::Approx(20.0).epsilon(0.01));
}

TEST_CASE("log-mel argmax sits at the filter nearest the class tone") {
  SynthSpec s = small_spec();
  s.audio_snr_db = 20.0;
  const LogMelExtractor mel;
  const auto& centers = mel.filterbank().centers_hz;
  for (std::size_t k = 0; k < 8; ++k) {
    s.n_classes = 8;
    const double f = class_tone_hz(k);
    std::size_t nearest = 0;
    for (std::size_t m = 1; m < centers.size(); ++m) {
      if (std::fabs(centers[m] - f) < std::fabs(centers[nearest] - f)) nearest = m;
    }
    RngStream rng(100 + k);
    const auto feat = mel.compute(render_segment(s, k, rng));
    std::size_t hits = 0;
    for (std::size_t t = 0; t < 100; ++t) {
      std::size_t best = 0;
      for (std::size_t m = 1; m < 64; ++m) {
        if (feat[m * 100 + t] > feat[best * 100 + t]) best = m;
      }
      hits += best == nearest;
      // Frames whose window overlaps the reflected padding see a distorted
      // tone; every fully interior frame must agree.
      const bool interior = t * 480 >= 1024 && t * 480 + 1024 <= 48000;
      if (interior) CHECK(best == nearest);
    }
    CHECK(hits >= 98);
  }
}

TEST_CASE("within-class mel features are closer than between-class") {
  SynthSpec s = small_spec();
  s.n_classes = 8;
  s.audio_snr_db = 20.0;
  const LogMelExtractor mel;
  std::vector<std::vector<std::vector<double>>> feats(8);
  for (std::size_t k = 0; k < 8; ++k) {
    RngStream rng(RngStream(9).fork(k));
    for (int r = 0; r < 3; ++r) feats[k].push_back(mel.compute(render_segment(s, k, rng)));
  }
  double within = 0, between = 0;
  std::size_t nw = 0, nb = 0;
  for (std::size_t a = 0; a < 8; ++a) {
    for (std::size_t b = a; b < 8; ++b) {
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
          if (a == b && j <= i) continue;
          const double d = std::sqrt(sq_dist(feats[a][i], feats[b][j]));
          if (a == b) within += d, ++nw;
          else between += d, ++nb;
        }
      }
    }
  }
  CHECK(within / double(nw) < between / double(nb));
}
