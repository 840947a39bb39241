#include "avc/cli/cli.hpp"

#include <CLI11.hpp>

#include <limits>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <ostream>

#include "avc/cli/pipeline.hpp"
#include "avc/core/error.hpp"
#include "avc/core/keyvalue.hpp"
#include "avc/model/checkpoint.hpp"
#include "avc/synth/synth.hpp"
#include "avc/train/trainer.hpp"

namespace avc {

namespace fs = std::filesystem;

namespace {

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw DataError("no such file: " + path);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw DataError("cannot write " + path.string());
}

void write_manifest_to(const fs::path& path, Manifest manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_manifest(path, manifest);
}

struct SynthArgs {
  std::string spec, out;
  double val_fraction = 0.1, test_fraction = 0.2;
  std::size_t threads = 0;
};

void cmd_synth(const SynthArgs& a, std::ostream& err) {
  require_file(a.spec);
  const SynthSpec spec = SynthSpec::from_kv(KeyValues::load(a.spec));
  const Manifest m = generate(spec, a.out, a.threads);
  const ManifestSplit split = split_by_video(m, a.val_fraction, a.test_fraction, spec.seed);
  const fs::path out(a.out);
  write_manifest_to(out / "train.jsonl", split.train);
  write_manifest_to(out / "val.jsonl", split.val);
  write_manifest_to(out / "test.jsonl", split.test);
  err << "synth-data: " << m.videos.size() << " clips (" << split.train.videos.size() << " train, "
      << split.val.videos.size() << " val, " << split.test.videos.size() << " test) in " << a.out << "\n";
}

struct FeaturizeArgs {
  std::string manifest, out;
  std::size_t visual_size = 224, threads = 0;
};

void cmd_featurize(const FeaturizeArgs& a, std::ostream& err) {
  require_file(a.manifest);
  const Manifest out = featurize(read_manifest(a.manifest), a.out, a.visual_size, a.threads);
  err << "featurize: " << all_items(out).size() << " items written to " << a.out << "\n";
}

struct PairsArgs {
  std::string manifest, strategy, out;
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

void cmd_pairs(const PairsArgs& a, std::ostream& err) {
  require_file(a.manifest);
  const Manifest m = read_manifest(a.manifest);
  validate_manifest(m);
  RngStream rng(a.seed);
  std::vector<PairRecord> pairs;
  if (a.strategy == "aligned") {
    pairs = make_positive_pairs(m, std::numeric_limits<std::size_t>::max(), rng);
    if (a.count && pairs.size() > a.count) {
      rng.shuffle(std::span<PairRecord>(pairs));
      pairs.resize(a.count);
    }
  } else {
    pairs = make_negative_pairs(m, parse_pair_source(a.strategy), a.count ? a.count : all_items(m).size(), rng);
  }
  write_pairs_jsonl(a.out, m, pairs);
  err << "make-pairs: " << pairs.size() << " " << a.strategy << " pairs written to " << a.out << "\n";
}

struct TrainArgs {
  std::string config, data, val, checkpoint, history, fine_tune_from;
  std::size_t threads = 0;
};

void cmd_train(const TrainArgs& a, std::ostream& err) {
  require_file(a.config);
  require_file(a.data);
  if (!a.val.empty()) require_file(a.val);
  if (!a.fine_tune_from.empty()) require_file(a.fine_tune_from);
  const TrainConfig config = TrainConfig::load(a.config);
  const Manifest all = read_manifest(a.data);
  validate_manifest(all);
  Manifest train_m, val_m;
  if (a.val.empty()) {
    ManifestSplit split = split_by_video(all, config.val_fraction, 0.0, config.seed);
    train_m = std::move(split.train);
    val_m = std::move(split.val);
  } else {
    train_m = all;
    val_m = read_manifest(a.val);
    validate_manifest(val_m);
  }
  if (val_m.videos.empty()) throw DataError("train: the validation split is empty");
  const std::size_t s = config.encoder.visual_size;
  const FeatureBank train_bank(train_m, s, a.threads), val_bank(val_m, s, a.threads);
  const TrainData data{train_m, train_bank, val_m, val_bank};
  auto progress = [&](const EpochRecord& r) {
    char line[128];
    std::snprintf(line, sizeof line, "epoch %zu  loss %.5f  val %.4f  lr %.4g  (%.1f s)\n", r.epoch, r.train_loss,
                  r.val_metric, r.lr, r.seconds);
    err << line;
  };
  const TrainResult result = a.fine_tune_from.empty()
                                 ? train<float>(config, data, progress)
                                 : fine_tune(load_checkpoint(a.fine_tune_from), config, data, progress);
  save_checkpoint(a.checkpoint, result.best);
  result.history.save_csv(a.history);
  err << "train: best epoch " << result.history.best_epoch << " (" << format_double(result.history.best_metric)
      << "), stopped by " << result.history.stop_reason << "\n";
}

struct EmbedArgs {
  std::string checkpoint, manifest, store;
  std::size_t threads = 0;
};

void cmd_embed(const EmbedArgs& a, std::ostream& err) {
  require_file(a.checkpoint);
  require_file(a.manifest);
  auto model = model_from_checkpoint<float>(load_checkpoint(a.checkpoint));
  const Manifest m = read_manifest(a.manifest);
  validate_manifest(m);
  const FeatureBank bank(m, model->config().encoder.visual_size, a.threads);
  const EmbeddingStore store = build_store(*model, bank, m);
  store.save(a.store);
  err << "embed: " << store.size() << " audio samples stored in " << a.store << "\n";
}

void check_k(std::size_t k, const EmbeddingStore& store, const std::string& path) {
  if (k < 1 || k > store.size()) {
    throw DataError("k = " + std::to_string(k) + " must lie in [1, " + std::to_string(store.size()) +
                    "]: the store " + path + " holds " + std::to_string(store.size()) + " entries");
  }
}

struct RecommendArgs {
  std::string checkpoint, frame, store;
  std::size_t k = 10;
};

void cmd_recommend(const RecommendArgs& a, std::ostream& out) {
  require_file(a.checkpoint);
  require_file(a.frame);
  require_file(a.store);
  const EmbeddingStore store = EmbeddingStore::load(a.store);
  check_k(a.k, store, a.store);
  auto model = model_from_checkpoint<float>(load_checkpoint(a.checkpoint));
  const auto px = load_frame_features(a.frame, model->config().encoder.visual_size);
  out << recommendations_json(topk(embed_frame(*model, px), store, a.k));
}

struct EvaluateArgs {
  std::string checkpoint, manifest, store, report;
  std::size_t k = 10, max_positives = 0, threads = 0;
  std::uint64_t seed = 0;
};

void cmd_evaluate(const EvaluateArgs& a, std::ostream& err) {
  require_file(a.checkpoint);
  require_file(a.manifest);
  require_file(a.store);
  const EmbeddingStore store = EmbeddingStore::load(a.store);
  check_k(a.k, store, a.store);
  auto model = model_from_checkpoint<float>(load_checkpoint(a.checkpoint));
  const Manifest m = read_manifest(a.manifest);
  validate_manifest(m);
  const FeatureBank bank(m, model->config().encoder.visual_size, a.threads);
  const EvaluationSummary s = evaluate(*model, bank, m, store, a.k, a.max_positives, a.seed);
  write_text(a.report, evaluation_json(s));
  err << "evaluate: sample accuracy " << format_double(s.recommendations.sample_accuracy) << "%, category accuracy "
      << format_double(s.recommendations.category_accuracy) << "%, correlation accuracy "
      << format_double(s.correlation_accuracy) << "% over " << s.correlation_pairs << " pairs\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio-visual correlation training and sound recommendation", "avc"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-data", "Generate the synthetic shapes-and-tones dataset");
  c_synth->add_option("--spec", synth.spec, "Dataset spec (key = value lines)")->required();
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--val-fraction", synth.val_fraction, "Share of clips per class in val.jsonl");
  c_synth->add_option("--test-fraction", synth.test_fraction, "Share of clips per class in test.jsonl");
  c_synth->add_option("--threads", synth.threads, "Worker threads (0: all cores)");

  FeaturizeArgs feat;
  auto* c_feat = app.add_subcommand("featurize", "Write AVF1 frame and log-mel features for a manifest");
  c_feat->add_option("--manifest", feat.manifest, "Input manifest")->required();
  c_feat->add_option("--out", feat.out, "Output directory")->required();
  c_feat->add_option("--visual-size", feat.visual_size, "Stored frame side in pixels");
  c_feat->add_option("--threads", feat.threads, "Worker threads (0: all cores)");

  PairsArgs pairs;
  auto* c_pairs = app.add_subcommand("make-pairs", "Sample aligned or uncorrelated pairs as JSON lines");
  c_pairs->add_option("--manifest", pairs.manifest, "Input manifest")->required();
  c_pairs->add_option("--strategy", pairs.strategy, "aligned, diff_label, diff_video or diff_time")
      ->required()
      ->check(CLI::IsMember({"aligned", "diff_label", "diff_video", "diff_time"}));
  c_pairs->add_option("--out", pairs.out, "Output JSON-lines file")->required();
  c_pairs->add_option("--count", pairs.count, "Number of pairs (0: one per item)");
  c_pairs->add_option("--seed", pairs.seed, "Sampling seed");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model and save the best checkpoint");
  c_train->add_option("--config", tr.config, "Training config (key = value lines)")->required();
  c_train->add_option("--data", tr.data, "Training manifest")->required();
  c_train->add_option("--val", tr.val, "Validation manifest (default: split off --data)");
  c_train->add_option("--out-checkpoint", tr.checkpoint, "Checkpoint to write")->required();
  c_train->add_option("--history", tr.history, "Per-epoch CSV to write")->required();
  c_train->add_option("--fine-tune-from", tr.fine_tune_from, "Contrastive checkpoint whose encoders to start from");
  c_train->add_option("--threads", tr.threads, "Feature loading threads (0: all cores)");

  EmbedArgs emb;
  auto* c_embed = app.add_subcommand("embed", "Embed every audio sample of a manifest into an AVE1 store");
  c_embed->add_option("--checkpoint", emb.checkpoint, "Model checkpoint")->required();
  c_embed->add_option("--manifest", emb.manifest, "Manifest of audio samples")->required();
  c_embed->add_option("--out-store", emb.store, "Store file to write")->required();
  c_embed->add_option("--threads", emb.threads, "Feature loading threads (0: all cores)");

  RecommendArgs rec;
  auto* c_rec = app.add_subcommand("recommend", "Print the k nearest audio samples for one frame as JSON");
  c_rec->add_option("--checkpoint", rec.checkpoint, "Model checkpoint")->required();
  c_rec->add_option("--frame", rec.frame, "Frame image (PNG, JPEG or AVF1)")->required();
  c_rec->add_option("--store", rec.store, "AVE1 store")->required();
  c_rec->add_option("--k", rec.k, "Number of recommendations");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Recommendation and correlation accuracy on a test manifest");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  c_eval->add_option("--test-manifest", ev.manifest, "Test manifest")->required();
  c_eval->add_option("--store", ev.store, "AVE1 store")->required();
  c_eval->add_option("--k", ev.k, "Number of recommendations per frame");
  c_eval->add_option("--report", ev.report, "JSON report to write")->required();
  c_eval->add_option("--max-positives", ev.max_positives, "Cap on correlated test pairs (0: all)");
  c_eval->add_option("--seed", ev.seed, "Seed for the test pairs");
  c_eval->add_option("--threads", ev.threads, "Feature loading threads (0: all cores)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "synth-data") cmd_synth(synth, err);
    if (name == "featurize") cmd_featurize(feat, err);
    if (name == "make-pairs") cmd_pairs(pairs, err);
    if (name == "train") cmd_train(tr, err);
    if (name == "embed") cmd_embed(emb, err);
    if (name == "recommend") cmd_recommend(rec, out);
    if (name == "evaluate") cmd_evaluate(ev, err);
  } catch (const std::exception& e) {
    err << "avc " << name << ": " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace avc
