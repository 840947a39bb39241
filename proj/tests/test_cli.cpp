#include "doctest.h"

#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "avc/cli/cli.hpp"
#include "avc/data/feature_bank.hpp"
#include "avc/model/checkpoint.hpp"
#include "avc/recommend/recommend.hpp"
#include "avc/synth/synth.hpp"
#include "avc/train/trainer.hpp"
#include "avc/cli/pipeline.hpp"
#include "test_util.hpp"

using namespace avc;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run avc_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kSpec =
    "n_classes = 4\nclips_per_class = 5\nseconds_per_clip = 3\nseed = 3\nimage_size = 64\n";

const char* kConfig =
    "regime = contrastive_infonce\nbatch_size = 4\nsteps_per_epoch = 3\nmax_epochs = 2\nlr = 0.05\nseed = 5\n"
    "width_scale = 0.125\nvisual_size = 32\n";

// synth-data -> train -> embed -> evaluate inside `dir`.
void pipeline(const fs::path& dir) {
  write(dir / "spec.txt", kSpec);
  write(dir / "train.cfg", kConfig);
  const std::string d = dir.string();
  REQUIRE(avc_run({"synth-data", "--spec", d + "/spec.txt", "--out", d + "/ds", "--threads", "2"}).code == 0);
  REQUIRE(avc_run({"train", "--config", d + "/train.cfg", "--data", d + "/ds/train.jsonl", "--val",
                   d + "/ds/val.jsonl", "--out-checkpoint", d + "/model.ckpt", "--history", d + "/history.csv"})
              .code == 0);
  REQUIRE(avc_run({"embed", "--checkpoint", d + "/model.ckpt", "--manifest", d + "/ds/test.jsonl", "--out-store",
                   d + "/store.ave"})
              .code == 0);
  REQUIRE(avc_run({"evaluate", "--checkpoint", d + "/model.ckpt", "--test-manifest", d + "/ds/test.jsonl", "--store",
                   d + "/store.ave", "--k", "3", "--report", d + "/report.json"})
              .code == 0);
}

struct Fixture {
  testing::TempDir dir{"avc_cli"};
  Fixture() { pipeline(dir.path()); }
};

Fixture& shared() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("help on every command exits 0 with usage text") {
  for (const char* cmd : {"synth-data", "featurize", "make-pairs", "train", "embed", "recommend", "evaluate"}) {
    const Run r = avc_run({cmd, "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("Usage") != std::string::npos);
  }
  const Run top = avc_run({"--help"});
  CHECK(top.code == 0);
  CHECK(top.out.find("evaluate") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
  CHECK(avc_run({}).code == 1);
  CHECK(avc_run({"bogus-command"}).code == 1);
  CHECK(avc_run({"embed", "--checkpoint", "a", "--manifest", "b", "--out-store", "c", "--unknown", "1"}).code == 1);
  CHECK(avc_run({"recommend", "--checkpoint", "a"}).code == 1);
  CHECK(avc_run({"make-pairs", "--manifest", "m", "--strategy", "sideways", "--out", "o"}).code == 1);
}

TEST_CASE("missing input files exit 2 naming the path") {
  const Run r = avc_run({"embed", "--checkpoint", "/nonexistent/model.ckpt", "--manifest", "x", "--out-store", "y"});
  CHECK(r.code == 2);
  CHECK(r.err.find("/nonexistent/model.ckpt") != std::string::npos);
  const Run s = avc_run({"synth-data", "--spec", "/nonexistent/spec.txt", "--out", "/tmp/unused"});
  CHECK(s.code == 2);
  CHECK(s.err.find("/nonexistent/spec.txt") != std::string::npos);
}

TEST_CASE("malformed config exits 2") {
  testing::TempDir dir("avc_cli_bad");
  write(dir / "bad.cfg", "regime = contrastive_infonce\nlearning_rate = 0.1\n");
  write(dir / "m.jsonl", "");
  const Run r = avc_run({"train", "--config", (dir / "bad.cfg").string(), "--data", (dir / "m.jsonl").string(),
                         "--out-checkpoint", (dir / "c").string(), "--history", (dir / "h").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("learning_rate") != std::string::npos);
}

TEST_CASE("recommend rejects k above the store size, naming the size") {
  auto& f = shared();
  const std::string d = f.dir.path().string();
  const std::size_t n = EmbeddingStore::load(f.dir / "store.ave").size();
  const Run r = avc_run({"recommend", "--checkpoint", d + "/model.ckpt", "--frame", d + "/ds/frames/c0_0000/0.png",
                         "--store", d + "/store.ave", "--k", std::to_string(n + 1)});
  CHECK(r.code == 2);
  CHECK(r.err.find(std::to_string(n) + " entries") != std::string::npos);
}

TEST_CASE("recommend prints the k nearest entries as JSON") {
  auto& f = shared();
  const std::string d = f.dir.path().string();
  const Run r = avc_run({"recommend", "--checkpoint", d + "/model.ckpt", "--frame", d + "/ds/frames/c1_0000/1.png",
                         "--store", d + "/store.ave", "--k", "4"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  REQUIRE(j.size() == 4);

  auto model = model_from_checkpoint<float>(load_checkpoint(f.dir / "model.ckpt"));
  const auto px = load_frame_features(f.dir / "ds/frames/c1_0000/1.png", 32);
  const auto expect = topk(embed_frame(*model, px), EmbeddingStore::load(f.dir / "store.ave"), 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(j[i]["sample"] == expect[i].sample_label);
    CHECK(j[i]["category"] == expect[i].category_label);
    CHECK(double(j[i]["distance"]) == doctest::Approx(expect[i].distance).epsilon(1e-12));
  }
}

TEST_CASE("evaluation report is consistent with its own frame results") {
  auto& f = shared();
  const auto j = nlohmann::json::parse(slurp(f.dir / "report.json"));
  CHECK(j["k"] == 3);
  std::size_t n = 0, s = 0, c = 0;
  for (const auto& fr : j["frames"]) {
    ++n;
    CHECK(fr["recommendations"].size() == 3);
    s += fr["sample_match"].get<bool>();
    c += fr["category_match"].get<bool>();
    if (fr["sample_match"].get<bool>()) CHECK(fr["category_match"].get<bool>());
  }
  CHECK(n == j["frames_evaluated"]);
  CHECK(double(j["sample_accuracy"]) == percent_tenths(s, n));
  CHECK(double(j["category_accuracy"]) == percent_tenths(c, n));
  CHECK(double(j["correlation_accuracy"]) >= 0.0);
  CHECK(double(j["correlation_accuracy"]) <= 100.0);
}

TEST_CASE("two pipeline runs produce byte-identical artifacts") {
  auto& f = shared();
  testing::TempDir other("avc_cli_again");
  pipeline(other.path());
  for (const char* name : {"model.ckpt", "store.ave", "report.json", "ds/manifest.jsonl", "ds/test.jsonl"}) {
    INFO(name);
    CHECK(slurp(f.dir / name) == slurp(other / name));
  }
}

TEST_CASE("commands leave their inputs untouched") {
  auto& f = shared();
  const std::string d = f.dir.path().string();
  const std::string manifest = slurp(f.dir / "ds/test.jsonl"), ckpt = slurp(f.dir / "model.ckpt"),
                    store = slurp(f.dir / "store.ave");
  testing::TempDir out("avc_cli_out");
  REQUIRE(avc_run({"featurize", "--manifest", d + "/ds/test.jsonl", "--out", (out / "feat").string(),
                   "--visual-size", "32"})
              .code == 0);
  REQUIRE(avc_run({"make-pairs", "--manifest", d + "/ds/test.jsonl", "--strategy", "diff_label", "--out",
                   (out / "pairs.jsonl").string()})
              .code == 0);
  REQUIRE(avc_run({"evaluate", "--checkpoint", d + "/model.ckpt", "--test-manifest", d + "/ds/test.jsonl",
                   "--store", d + "/store.ave", "--report", (out / "r.json").string(), "--k", "2"})
              .code == 0);
  CHECK(slurp(f.dir / "ds/test.jsonl") == manifest);
  CHECK(slurp(f.dir / "model.ckpt") == ckpt);
  CHECK(slurp(f.dir / "store.ave") == store);
}

TEST_CASE("featurized manifests load to the same encoder inputs") {
  auto& f = shared();
  testing::TempDir out("avc_cli_feat");
  REQUIRE(avc_run({"featurize", "--manifest", (f.dir / "ds/test.jsonl").string(), "--out", out.path().string(),
                   "--visual-size", "32"})
              .code == 0);
  const FeatureBank raw(read_manifest(f.dir / "ds/test.jsonl"), 32, 1);
  const FeatureBank feat(read_manifest(out / "manifest.jsonl"), 32, 1);
  REQUIRE(raw.items() == feat.items());
  const auto items = all_items(read_manifest(out / "manifest.jsonl"));
  for (const auto& it : items) {
    const auto a = raw.frame(it), b = feat.frame(it);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
    const auto m = raw.mel(it), n = feat.mel(it);
    CHECK(std::equal(m.begin(), m.end(), n.begin()));
  }
}

TEST_CASE("make-pairs writes the requested strategy") {
  auto& f = shared();
  testing::TempDir out("avc_cli_pairs");
  const Run r = avc_run({"make-pairs", "--manifest", (f.dir / "ds/train.jsonl").string(), "--strategy", "aligned",
                         "--count", "5", "--out", (out / "p.jsonl").string()});
  REQUIRE(r.code == 0);
  std::istringstream lines(slurp(out / "p.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["y"] == 1);
    CHECK(j["frame_video"] == j["audio_video"]);
    CHECK(j["frame_index"] == j["audio_index"]);
    ++n;
  }
  CHECK(n == 5);
}

TEST_CASE("shipped configs parse") {
  const fs::path dir = AVC_CONFIG_DIR;
  const auto spec = SynthSpec::from_kv(KeyValues::load(dir / "synth_spec.txt"));
  CHECK(spec.n_classes == 8);
  CHECK(spec.clips_per_class == 200);
  CHECK(spec.seconds_per_clip == 5);
  CHECK(spec.seed == 7);

  const auto infonce = TrainConfig::load(dir / "infonce.cfg");
  CHECK(infonce.regime == Regime::contrastive_infonce);
  CHECK(infonce.effective_batch_size() == 8);
  const auto attention = TrainConfig::load(dir / "attention.cfg");
  CHECK(attention.regime == Regime::attention_bce_margin);
  CHECK(attention.effective_batch_size() * attention.steps_per_epoch == 640);
  const auto baseline = TrainConfig::load(dir / "baseline.cfg");
  CHECK(baseline.regime == Regime::baseline_bce);
  CHECK(baseline.effective_batch_size() * baseline.steps_per_epoch == 640);
  for (const auto* c : {&infonce, &attention, &baseline}) {
    CHECK(c->encoder.visual_size == 56);
    CHECK(c->encoder.width_scale == 0.25);
  }
  const auto full = TrainConfig::load(dir / "full_scale.cfg");
  CHECK(full.encoder.visual_size == 224);
  CHECK(full.encoder.width_scale == 1.0);
}
