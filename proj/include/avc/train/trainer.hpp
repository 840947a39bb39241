#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "avc/core/keyvalue.hpp"
#include "avc/data/feature_bank.hpp"
#include "avc/data/manifest.hpp"
#include "avc/data/sampler.hpp"
#include "avc/model/checkpoint.hpp"
#include "avc/model/encoder.hpp"

namespace avc {

enum class Regime { baseline_bce, attention_bce_margin, contrastive_ntxent, contrastive_infonce };
const char* to_string(Regime r);
Regime parse_regime(const std::string& text);
bool is_contrastive(Regime r);

/// Training settings, read from `key = value` text. Keys not listed in
/// known_keys() are rejected.
struct TrainConfig {
  Regime regime = Regime::attention_bce_margin;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 0;  // 0: 128 for baseline_bce, 32 otherwise
  double margin = 0.1;
  double tau = 0.5;
  bool symmetric = false;  // contrastive: also average audio-anchored terms
  ProjectorKind projector = ProjectorKind::linear;
  std::size_t patience = 20;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;

  std::size_t lr_decay_patience = 10;
  double lr_decay_factor = 0.5;
  double lr_floor = 1e-6;

  std::size_t steps_per_epoch = 0;  // 0: every batch the sampler emits
  PairSource negatives = PairSource::diff_label;
  double val_fraction = 0.1;     // used when the caller splits one manifest
  std::size_t val_positives = 0;  // cap on validation and head-fitting positives; 0: all

  /// Architecture follows the regime (baseline for baseline_bce, attention
  /// otherwise) unless `architecture` is given explicitly.
  EncoderConfig encoder;

  std::size_t effective_batch_size() const;
  bool higher_is_better() const { return !is_contrastive(regime); }
  ModelConfig model_config() const;
  void validate() const;

  static const std::vector<std::string>& known_keys();
  static TrainConfig from_kv(const KeyValues& kv);
  static TrainConfig load(const std::filesystem::path& path);
  KeyValues to_kv() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_metric = 0;  // correlation accuracy (%) or validation loss
  double lr = 0;          // rate used during the epoch
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  bool higher_is_better = true;
  std::size_t best_epoch = 0;
  double best_metric = 0;
  std::string stop_reason;

  /// CSV with header epoch,train_loss,val_metric,lr,seconds.
  std::string to_csv() const;
  void save_csv(const std::filesystem::path& path) const;
  /// Equality of everything except wall-clock seconds.
  bool same_outcome(const TrainHistory& other) const;
};

/// Stop after `patience` consecutive epochs without strict improvement.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, bool higher_is_better) : patience_(patience), higher_(higher_is_better) {}
  /// Returns true when `metric` improves on the best so far. Non-finite
  /// metrics never improve.
  bool observe(std::size_t epoch, double metric);
  bool should_stop() const { return best_epoch_ > 0 && since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }

 private:
  std::size_t patience_;
  bool higher_;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = 0;
};

/// Halve-on-plateau: multiply the rate by `factor` after `patience`
/// consecutive non-improving epochs (the count restarts after each decay),
/// never going below `floor`.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, std::size_t patience = 10, double factor = 0.5, double floor = 1e-6)
      : lr_(lr), patience_(patience), factor_(factor), floor_(floor) {}
  /// Returns the rate for the next epoch.
  double observe(bool improved);
  double lr() const { return lr_; }

 private:
  double lr_;
  std::size_t patience_;
  double factor_;
  double floor_;
  std::size_t flat_ = 0;
};

/// Outcome of feeding a validation sequence through the stopping and decay
/// rules exactly as train() does.
struct ScheduleReplay {
  std::size_t stop_epoch = 0;  // last epoch run
  std::size_t best_epoch = 0;
  std::vector<double> lrs;     // rate used in each epoch run
  double next_lr = 0;          // rate after the last epoch
};

ScheduleReplay replay_schedule(const std::vector<double>& val_metrics, const TrainConfig& config);

/// Learning rate after the epochs recorded in `history`, starting from
/// config.lr.
double decay_lr(const TrainHistory& history, const TrainConfig& config);

/// Training and validation inputs. Pairs reference videos of their own
/// manifest; each bank must be built from the matching manifest.
struct TrainData {
  const Manifest& train;
  const FeatureBank& train_bank;
  const Manifest& val;
  const FeatureBank& val_bank;
};

struct TrainResult {
  Checkpoint best;
  TrainHistory history;
};

/// Observer called after every epoch (progress reporting).
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs epochs until early stopping or max_epochs and leaves the best epoch's
/// weights in `model`. Contrastive regimes additionally fit the correlation
/// head on frozen embeddings (fit_head) before the checkpoint is taken.
/// Throws NumericError on a non-finite loss, naming epoch and batch.
template <class T>
TrainResult train(const TrainConfig& config, AvModel<T>& model, const TrainData& data,
                  const EpochCallback& on_epoch = {});

/// Builds a fresh model from config.model_config() and trains it.
template <class T>
TrainResult train(const TrainConfig& config, const TrainData& data, const EpochCallback& on_epoch = {});

struct LrSearchResult {
  double best_lr = 0;
  std::vector<std::pair<double, double>> scores;  // (lr, best validation metric); NaN when diverged
};

/// Short run per candidate with the same seed; the best validation metric
/// wins, ties go to the smaller rate and diverged runs rank last.
LrSearchResult lr_grid_search(const TrainConfig& config, std::vector<double> candidates, std::size_t budget_epochs,
                              const TrainData& data);

/// The model fine_tune starts from: checkpoint encoders, fresh head, no
/// projector. Throws Error under the same conditions as fine_tune.
std::unique_ptr<AvModel<float>> fine_tune_model(const Checkpoint& pretrained, const TrainConfig& config);

/// Loads the visual and audio encoders of a contrastive checkpoint into a
/// model with a freshly initialised correlation head and trains everything
/// with BCE + margin loss. Throws Error when the checkpoint is not from a
/// contrastive regime or its encoder differs from config.encoder.
TrainResult fine_tune(const Checkpoint& pretrained, TrainConfig config, const TrainData& data,
                      const EpochCallback& on_epoch = {});

/// Deterministic balanced evaluation pairs: every aligned pair (capped at
/// `max_positives`, 0 = no cap) plus as many negatives of `strategy`.
std::vector<PairRecord> evaluation_pairs(const Manifest& manifest, PairSource strategy, std::size_t max_positives,
                                         std::uint64_t seed);

/// Class 1 (correlated) where the head's first logit is the argmax.
template <class T>
std::vector<int> predict_correlation(AvModel<T>& model, const FeatureBank& bank, const std::vector<PairRecord>& pairs);

/// Correlation accuracy in percent (unrounded).
template <class T>
double correlation_accuracy(AvModel<T>& model, const FeatureBank& bank, const std::vector<PairRecord>& pairs);

/// Fits only the head (w, b) by regularized Newton iterations on logistic
/// loss over embedding distances of `pairs`, encoders frozen.
template <class T>
void fit_head(AvModel<T>& model, const FeatureBank& bank, const std::vector<PairRecord>& pairs);

/// Eval-mode embeddings of the given items, one 128-float row each.
template <class T>
std::vector<std::vector<float>> embed_items(AvModel<T>& model, const FeatureBank& bank,
                                            const std::vector<ItemRef>& items, Stream stream);

}  // namespace avc
