#include "avc/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "avc/core/error.hpp"
#include "avc/core/optim.hpp"
#include "avc/loss/losses.hpp"

namespace avc {

namespace {

constexpr std::size_t kEvalBatch = 64;
constexpr std::size_t kAllSeconds = std::numeric_limits<std::size_t>::max();

std::string sizes_text(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

bool improves(double metric, double best, bool higher, bool first) {
  if (!std::isfinite(metric)) return false;
  if (first) return true;
  return higher ? metric > best : metric < best;
}

}  // namespace

const char* to_string(Regime r) {
  switch (r) {
    case Regime::baseline_bce: return "baseline_bce";
    case Regime::attention_bce_margin: return "attention_bce_margin";
    case Regime::contrastive_ntxent: return "contrastive_ntxent";
    case Regime::contrastive_infonce: return "contrastive_infonce";
  }
  return "?";
}

Regime parse_regime(const std::string& text) {
  for (Regime r : {Regime::baseline_bce, Regime::attention_bce_margin, Regime::contrastive_ntxent,
                   Regime::contrastive_infonce}) {
    if (text == to_string(r)) return r;
  }
  throw Error("unknown regime '" + text +
              "' (expected baseline_bce, attention_bce_margin, contrastive_ntxent or contrastive_infonce)");
}

bool is_contrastive(Regime r) { return r == Regime::contrastive_ntxent || r == Regime::contrastive_infonce; }

// ---------------------------------------------------------------------------
// TrainConfig

std::size_t TrainConfig::effective_batch_size() const {
  if (batch_size) return batch_size;
  return regime == Regime::baseline_bce ? 128 : 32;
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.encoder = encoder;
  m.with_head = true;
  m.projector = is_contrastive(regime) ? projector : ProjectorKind::none;
  m.seed = seed;
  return m;
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0) || !std::isfinite(v)) throw Error(std::string("train config: ") + name + " must be positive");
  };
  if (!(lr >= 0) || !std::isfinite(lr)) throw Error("train config: lr must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) throw Error("train config: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw Error("train config: weight_decay must be non-negative");
  positive(margin, "margin");
  positive(tau, "tau");
  positive(lr_decay_factor, "lr_decay_factor");
  if (lr_decay_factor > 1) throw Error("train config: lr_decay_factor must not exceed 1");
  if (!(lr_floor >= 0)) throw Error("train config: lr_floor must be non-negative");
  if (patience < 1) throw Error("train config: patience must be at least 1");
  if (max_epochs < 1) throw Error("train config: max_epochs must be at least 1");
  if (!(val_fraction > 0 && val_fraction < 1)) throw Error("train config: val_fraction must lie in (0, 1)");
  const std::size_t bs = effective_batch_size();
  if (is_contrastive(regime)) {
    if (bs < 2) throw Error("train config: contrastive batch_size must be at least 2");
    if (projector == ProjectorKind::none) throw Error("train config: contrastive regimes need a projector");
  } else if (bs < 2 || bs % 2) {
    throw Error("train config: classification batch_size must be even and at least 2");
  }
  if (negatives == PairSource::aligned) throw Error("train config: negatives cannot be 'aligned'");
  encoder.validate();
}

const std::vector<std::string>& TrainConfig::known_keys() {
  static const std::vector<std::string> keys{
      "regime", "lr", "momentum", "weight_decay", "batch_size", "margin", "tau", "symmetric", "projector",
      "patience", "max_epochs", "seed", "lr_decay_patience", "lr_decay_factor", "lr_floor", "steps_per_epoch",
      "negatives", "val_fraction", "val_positives", "architecture", "visual_channels", "audio_channels",
      "n_attention_taps", "embed_dim", "hidden_dim", "width_scale", "compatibility", "visual_size"};
  return keys;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) {
  kv.require_known(known_keys());
  auto count = [&](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(key, std::int64_t(fallback));
    if (v < 0) throw Error(std::string("train config: ") + key + " must be non-negative");
    return std::size_t(v);
  };
  TrainConfig c;
  c.regime = parse_regime(kv.get_or("regime", to_string(c.regime)));
  c.lr = kv.get_double("lr", c.lr);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.batch_size = count("batch_size", c.batch_size);
  c.margin = kv.get_double("margin", c.margin);
  c.tau = kv.get_double("tau", c.tau);
  c.symmetric = kv.get_bool("symmetric", c.symmetric);
  c.projector = parse_projector(kv.get_or("projector", to_string(c.projector)));
  c.patience = count("patience", c.patience);
  c.max_epochs = count("max_epochs", c.max_epochs);
  c.seed = count("seed", 0);
  c.lr_decay_patience = count("lr_decay_patience", c.lr_decay_patience);
  c.lr_decay_factor = kv.get_double("lr_decay_factor", c.lr_decay_factor);
  c.lr_floor = kv.get_double("lr_floor", c.lr_floor);
  c.steps_per_epoch = count("steps_per_epoch", c.steps_per_epoch);
  c.negatives = parse_pair_source(kv.get_or("negatives", to_string(c.negatives)));
  c.val_fraction = kv.get_double("val_fraction", c.val_fraction);
  c.val_positives = count("val_positives", c.val_positives);

  EncoderConfig& e = c.encoder;
  e.architecture = c.regime == Regime::baseline_bce ? Architecture::baseline : Architecture::attention;
  if (kv.has("architecture")) e.architecture = parse_architecture(kv.get("architecture"));
  e.visual_channels = kv.get_sizes("visual_channels", e.visual_channels);
  e.audio_channels = kv.get_sizes("audio_channels", e.audio_channels);
  e.n_attention_taps = count("n_attention_taps", e.n_attention_taps);
  e.embed_dim = count("embed_dim", e.embed_dim);
  e.hidden_dim = count("hidden_dim", e.hidden_dim);
  e.width_scale = kv.get_double("width_scale", e.width_scale);
  e.compatibility = parse_compatibility(kv.get_or("compatibility", to_string(e.compatibility)));
  e.visual_size = count("visual_size", e.visual_size);
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) { return from_kv(KeyValues::load(path)); }

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("regime", to_string(regime));
  kv.set("lr", format_double(lr));
  kv.set("momentum", format_double(momentum));
  kv.set("weight_decay", format_double(weight_decay));
  kv.set("batch_size", std::to_string(effective_batch_size()));
  kv.set("margin", format_double(margin));
  kv.set("tau", format_double(tau));
  kv.set("symmetric", symmetric ? "true" : "false");
  kv.set("projector", to_string(projector));
  kv.set("patience", std::to_string(patience));
  kv.set("max_epochs", std::to_string(max_epochs));
  kv.set("seed", std::to_string(seed));
  kv.set("lr_decay_patience", std::to_string(lr_decay_patience));
  kv.set("lr_decay_factor", format_double(lr_decay_factor));
  kv.set("lr_floor", format_double(lr_floor));
  kv.set("steps_per_epoch", std::to_string(steps_per_epoch));
  kv.set("negatives", to_string(negatives));
  kv.set("val_fraction", format_double(val_fraction));
  kv.set("val_positives", std::to_string(val_positives));
  kv.set("architecture", to_string(encoder.architecture));
  kv.set("visual_channels", sizes_text(encoder.visual_channels));
  kv.set("audio_channels", sizes_text(encoder.audio_channels));
  kv.set("n_attention_taps", std::to_string(encoder.n_attention_taps));
  kv.set("embed_dim", std::to_string(encoder.embed_dim));
  kv.set("hidden_dim", std::to_string(encoder.hidden_dim));
  kv.set("width_scale", format_double(encoder.width_scale));
  kv.set("compatibility", to_string(encoder.compatibility));
  kv.set("visual_size", std::to_string(encoder.visual_size));
  return kv;
}

// ---------------------------------------------------------------------------
// History and schedules

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,val_metric,lr,seconds\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_metric) << ','
        << format_double(e.lr) << ',' << format_double(e.seconds) << '\n';
  }
  return out.str();
}

void TrainHistory::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write history " + path.string());
  out << to_csv();
  if (!out) throw DataError("failed writing " + path.string());
}

bool TrainHistory::same_outcome(const TrainHistory& o) const {
  if (epochs.size() != o.epochs.size() || higher_is_better != o.higher_is_better || best_epoch != o.best_epoch ||
      stop_reason != o.stop_reason) {
    return false;
  }
  auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
  if (!same(best_metric, o.best_metric)) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto &a = epochs[i], &b = o.epochs[i];
    if (a.epoch != b.epoch || !same(a.train_loss, b.train_loss) || !same(a.val_metric, b.val_metric) ||
        !same(a.lr, b.lr)) {
      return false;
    }
  }
  return true;
}

bool EarlyStopping::observe(std::size_t epoch, double metric) {
  if (improves(metric, best_, higher_, best_epoch_ == 0)) {
    best_ = metric;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

double PlateauSchedule::observe(bool improved) {
  if (improved) {
    flat_ = 0;
    return lr_;
  }
  if (++flat_ >= patience_) {
    lr_ = std::max(lr_ * factor_, floor_);
    flat_ = 0;
  }
  return lr_;
}

ScheduleReplay replay_schedule(const std::vector<double>& val_metrics, const TrainConfig& config) {
  EarlyStopping stopper(config.patience, config.higher_is_better());
  PlateauSchedule schedule(config.lr, config.lr_decay_patience, config.lr_decay_factor, config.lr_floor);
  ScheduleReplay out;
  double lr = config.lr;
  for (std::size_t i = 0; i < val_metrics.size() && i < config.max_epochs; ++i) {
    out.lrs.push_back(lr);
    out.stop_epoch = i + 1;
    const bool improved = stopper.observe(i + 1, val_metrics[i]);
    lr = schedule.observe(improved);
    if (stopper.should_stop()) break;
  }
  out.best_epoch = stopper.best_epoch();
  out.next_lr = lr;
  return out;
}

double decay_lr(const TrainHistory& history, const TrainConfig& config) {
  std::vector<double> metrics;
  for (const auto& e : history.epochs) metrics.push_back(e.val_metric);
  TrainConfig c = config;
  c.max_epochs = std::max<std::size_t>(metrics.size(), 1);
  c.patience = std::numeric_limits<std::size_t>::max();
  return replay_schedule(metrics, c).next_lr;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

std::vector<PairRecord> evaluation_pairs(const Manifest& manifest, PairSource strategy, std::size_t max_positives,
                                         std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<PairRecord> pos = make_positive_pairs(manifest, kAllSeconds, rng);
  if (max_positives && pos.size() > max_positives) {
    rng.shuffle(std::span<PairRecord>(pos));
    pos.resize(max_positives);
  }
  std::vector<PairRecord> out = pos;
  const auto neg = make_negative_pairs(manifest, strategy, pos.size(), rng);
  out.insert(out.end(), neg.begin(), neg.end());
  return out;
}

namespace {

template <class T>
std::pair<Tensor<T>, Tensor<T>> embed_pairs(AvModel<T>& model, const FeatureBank& bank,
                                            const std::vector<PairRecord>& pairs, Mode mode) {
  std::vector<ItemRef> frames, audio;
  for (const auto& p : pairs) {
    frames.push_back(p.frame);
    audio.push_back(p.audio);
  }
  return {model.embed_visual(bank.frames<T>(frames), mode), model.embed_audio(bank.mels<T>(audio), mode)};
}

template <class T>
std::vector<T> labels_of(const std::vector<PairRecord>& pairs) {
  std::vector<T> y;
  for (const auto& p : pairs) y.push_back(T(p.y));
  return y;
}

template <class T>
std::vector<double> pair_distances(AvModel<T>& model, const FeatureBank& bank, const std::vector<PairRecord>& pairs) {
  NoGradGuard guard;
  std::vector<double> d;
  for (std::size_t s = 0; s < pairs.size(); s += kEvalBatch) {
    const std::vector<PairRecord> chunk(pairs.begin() + std::ptrdiff_t(s),
                                        pairs.begin() + std::ptrdiff_t(std::min(pairs.size(), s + kEvalBatch)));
    auto [ev, ea] = embed_pairs(model, bank, chunk, Mode::eval);
    const std::size_t n = chunk.size(), dim = ev.dim(1);
    const auto a = ev.data(), b = ea.data();
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double t = double(a[i * dim + j]) - double(b[i * dim + j]);
        acc += t * t;
      }
      d.push_back(std::sqrt(acc));
    }
  }
  return d;
}

// Loss of one batch; classification batches hold mixed labels, contrastive
// batches hold N aligned pairs.
template <class T>
Tensor<T> batch_loss(const TrainConfig& config, AvModel<T>& model, const FeatureBank& bank, const Batch& batch,
                     Mode mode) {
  auto [ev, ea] = embed_pairs(model, bank, batch, mode);
  if (is_contrastive(config.regime)) {
    const Tensor<T> zv = model.config().projector == ProjectorKind::none ? ev : model.project(ev);
    const Tensor<T> za = model.config().projector == ProjectorKind::none ? ea : model.project(ea);
    return config.regime == Regime::contrastive_infonce ? info_nce_batch(zv, za, config.tau, config.symmetric)
                                                        : nt_xent_batch(zv, za, config.tau, config.symmetric);
  }
  const std::vector<T> y = labels_of<T>(batch);
  const CorrelationOutput<T> out = model.correlate(ev, ea);
  const Tensor<T> bce = bce_loss(out.prob, y);
  if (config.regime == Regime::baseline_bce) return bce;
  return combined_loss(bce, margin_contrastive(out.distance, y, config.margin));
}

std::vector<Batch> epoch_batches(const TrainConfig& config, const Manifest& manifest, RngStream rng) {
  const std::size_t bs = config.effective_batch_size();
  const auto pos = make_positive_pairs(manifest, kAllSeconds, rng);
  std::vector<Batch> batches;
  if (is_contrastive(config.regime)) {
    batches = contrastive_batches(manifest, pos, bs, rng);
  } else {
    const auto neg = make_negative_pairs(manifest, config.negatives, pos.size(), rng);
    batches = balanced_batches(pos, neg, bs, rng);
  }
  if (config.steps_per_epoch && batches.size() > config.steps_per_epoch) batches.resize(config.steps_per_epoch);
  return batches;
}

}  // namespace

template <class T>
std::vector<int> predict_correlation(AvModel<T>& model, const FeatureBank& bank, const std::vector<PairRecord>& pairs) {
  NoGradGuard guard;
  std::vector<int> out;
  for (std::size_t s = 0; s < pairs.size(); s += kEvalBatch) {
    const std::vector<PairRecord> chunk(pairs.begin() + std::ptrdiff_t(s),
                                        pairs.begin() + std::ptrdiff_t(std::min(pairs.size(), s + kEvalBatch)));
    auto [ev, ea] = embed_pairs(model, bank, chunk, Mode::eval);
    const auto logits = model.correlate(ev, ea).logits.data();
    for (std::size_t i = 0; i < chunk.size(); ++i) out.push_back(logits[2 * i] >= logits[2 * i + 1] ? 1 : 0);
  }
  return out;
}

template <class T>
double correlation_accuracy(AvModel<T>& model, const FeatureBank& bank, const std::vector<PairRecord>& pairs) {
  if (pairs.empty()) throw Error("correlation_accuracy: no evaluation pairs");
  const auto pred = predict_correlation(model, bank, pairs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) hits += pred[i] == pairs[i].y;
  return 100.0 * double(hits) / double(pairs.size());
}

template <class T>
void fit_head(AvModel<T>& model, const FeatureBank& bank, const std::vector<PairRecord>& pairs) {
  if (!model.has_head()) throw Error("fit_head: model has no correlation head");
  if (pairs.empty()) throw Error("fit_head: no pairs");
  const std::vector<double> d = pair_distances(model, bank, pairs);
  // Minimise mean logistic loss of sigmoid(w d + b) plus lambda/2 (w^2 + b^2);
  // the ridge keeps separable data from sending w to infinity.
  const double lambda = 1e-3;
  double w = kHeadInitW, b = kHeadInitB;
  const double n = double(d.size());
  for (int it = 0; it < 100; ++it) {
    double gw = lambda * w, gb = lambda * b, hww = lambda, hwb = 0, hbb = lambda;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double z = w * d[i] + b;
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double r = (p - double(pairs[i].y)) / n;
      const double s = p * (1 - p) / n;
      gw += r * d[i];
      gb += r;
      hww += s * d[i] * d[i];
      hwb += s * d[i];
      hbb += s;
    }
    const double det = hww * hbb - hwb * hwb;
    const double dw = (hbb * gw - hwb * gb) / det;
    const double db = (hww * gb - hwb * gw) / det;
    w -= dw;
    b -= db;
    if (std::fabs(dw) + std::fabs(db) < 1e-12) break;
  }
  Tensor<T> hw = model.head_w(), hb = model.head_b();
  hw.mutable_data()[0] = T(w);
  hb.mutable_data()[0] = T(b);
}

template <class T>
std::vector<std::vector<float>> embed_items(AvModel<T>& model, const FeatureBank& bank,
                                            const std::vector<ItemRef>& items, Stream stream) {
  NoGradGuard guard;
  std::vector<std::vector<float>> out;
  for (std::size_t s = 0; s < items.size(); s += kEvalBatch) {
    const std::vector<ItemRef> chunk(items.begin() + std::ptrdiff_t(s),
                                     items.begin() + std::ptrdiff_t(std::min(items.size(), s + kEvalBatch)));
    const Tensor<T> e = stream == Stream::visual ? model.embed_visual(bank.frames<T>(chunk), Mode::eval)
                                                 : model.embed_audio(bank.mels<T>(chunk), Mode::eval);
    const std::size_t dim = e.dim(1);
    const auto v = e.data();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.emplace_back(v.begin() + std::ptrdiff_t(i * dim), v.begin() + std::ptrdiff_t((i + 1) * dim));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

template <class T>
TrainResult train(const TrainConfig& config, AvModel<T>& model, const TrainData& data, const EpochCallback& on_epoch) {
  config.validate();
  if (data.train_bank.visual_size() != model.config().encoder.visual_size ||
      data.val_bank.visual_size() != model.config().encoder.visual_size) {
    throw Error("train: feature banks hold " + std::to_string(data.train_bank.visual_size()) +
                "-pixel frames but the model expects " + std::to_string(model.config().encoder.visual_size));
  }
  const bool contrastive = is_contrastive(config.regime);
  if (!contrastive && !model.has_head()) throw Error("train: classification regimes need a correlation head");
  if (contrastive && model.config().projector == ProjectorKind::none) {
    throw Error("train: contrastive regimes need a projector");
  }

  // The contrastive objective never touches the head; it is fitted afterwards.
  ParameterSet<T> trainable;
  for (auto& p : model.params().parameters()) {
    if (contrastive && p.name.rfind("head.", 0) == 0) continue;
    trainable.add_parameter(p.name, p.tensor);
  }
  SgdNesterov<T> optimizer({config.lr, config.momentum, config.weight_decay});

  const RngStream root = RngStream(config.seed).fork(0x7472);
  std::vector<PairRecord> val_pairs;
  std::vector<Batch> val_batches;
  {
    RngStream rng = root.fork(1);
    if (contrastive) {
      auto pos = make_positive_pairs(data.val, kAllSeconds, rng);
      if (config.val_positives && pos.size() > config.val_positives) {
        rng.shuffle(std::span<PairRecord>(pos));
        pos.resize(config.val_positives);
      }
      val_batches = contrastive_batches(data.val, pos, config.effective_batch_size(), rng);
      if (val_batches.empty()) throw DataError("train: the validation split yields no contrastive batch");
    } else {
      val_pairs = evaluation_pairs(data.val, config.negatives, config.val_positives, rng.next_u64());
    }
  }

  auto validate_model = [&]() -> double {
    if (!contrastive) return correlation_accuracy(model, data.val_bank, val_pairs);
    NoGradGuard guard;
    double total = 0;
    for (const auto& b : val_batches) total += double(batch_loss(config, model, data.val_bank, b, Mode::eval).item());
    return total / double(val_batches.size());
  };

  KeyValues meta;
  meta.set("regime", to_string(config.regime));
  meta.set("lr", format_double(config.lr));
  meta.set("seed", std::to_string(config.seed));

  TrainResult result;
  result.history.higher_is_better = config.higher_is_better();
  EarlyStopping stopper(config.patience, config.higher_is_better());
  PlateauSchedule schedule(config.lr, config.lr_decay_patience, config.lr_decay_factor, config.lr_floor);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = epoch_batches(config, data.train, root.fork(1000 + epoch));
    if (batches.empty()) throw DataError("train: the training split yields no batch");
    double loss_sum = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      Tensor<T> loss = batch_loss(config, model, data.train_bank, batches[bi], Mode::train);
      const double value = double(loss.item());
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(bi + 1));
      }
      loss_sum += value;
      trainable.zero_grad();
      loss.backward();
      optimizer.step(trainable);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / double(batches.size());
    rec.val_metric = validate_model();
    rec.lr = optimizer.lr();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool improved = stopper.observe(epoch, rec.val_metric);
    if (improved) {
      meta.set("best_epoch", std::to_string(epoch));
      meta.set("best_val_metric", format_double(rec.val_metric));
      result.best = capture_checkpoint(model, meta);
    }
    optimizer.set_lr(schedule.observe(improved));
    if (stopper.should_stop()) {
      result.history.stop_reason = "patience";
      break;
    }
  }
  if (result.history.stop_reason.empty()) result.history.stop_reason = "max_epochs";
  if (stopper.best_epoch() == 0) throw NumericError("train: no epoch produced a finite validation metric");
  result.history.best_epoch = stopper.best_epoch();
  result.history.best_metric = stopper.best_metric();

  restore_checkpoint(model, result.best);
  if (contrastive) {
    RngStream rng = root.fork(2);
    fit_head(model, data.train_bank, evaluation_pairs(data.train, config.negatives, config.val_positives, rng.next_u64()));
    result.best = capture_checkpoint(model, meta);
  }
  return result;
}

template <class T>
TrainResult train(const TrainConfig& config, const TrainData& data, const EpochCallback& on_epoch) {
  AvModel<T> model(config.model_config());
  return train(config, model, data, on_epoch);
}

LrSearchResult lr_grid_search(const TrainConfig& config, std::vector<double> candidates, std::size_t budget_epochs,
                              const TrainData& data) {
  if (candidates.empty()) throw Error("lr_grid_search: no candidate learning rates");
  if (budget_epochs < 1) throw Error("lr_grid_search: budget must be at least one epoch");
  std::sort(candidates.begin(), candidates.end());
  LrSearchResult out;
  bool have = false;
  double best = 0;
  for (double lr : candidates) {
    TrainConfig c = config;
    c.lr = lr;
    c.max_epochs = budget_epochs;
    double score = std::numeric_limits<double>::quiet_NaN();
    try {
      score = train<float>(c, data).history.best_metric;
    } catch (const NumericError&) {
    }
    out.scores.emplace_back(lr, score);
    if (std::isfinite(score) && (!have || (config.higher_is_better() ? score > best : score < best))) {
      best = score;
      out.best_lr = lr;
      have = true;
    }
  }
  if (!have) out.best_lr = candidates.front();
  return out;
}

std::unique_ptr<AvModel<float>> fine_tune_model(const Checkpoint& pretrained, const TrainConfig& config) {
  const std::string regime = pretrained.meta.get_or("regime", "");
  bool ok = false;
  try {
    ok = is_contrastive(parse_regime(regime));
  } catch (const Error&) {
  }
  if (!ok) throw Error("fine_tune: checkpoint comes from regime '" + regime + "', expected a contrastive one");
  ModelConfig mc = pretrained.config;
  mc.with_head = true;
  mc.projector = ProjectorKind::none;
  mc.seed = config.seed;
  const KeyValues want = model_config_to_kv({config.encoder, true, ProjectorKind::none, config.seed});
  const KeyValues have = model_config_to_kv(mc);
  for (const auto& [key, value] : want.entries()) {
    if (have.get(key) != value) {
      throw Error("fine_tune: config " + key + " = " + value + " does not match the checkpoint's " + have.get(key));
    }
  }
  auto model = std::make_unique<AvModel<float>>(mc);
  restore_checkpoint(*model, pretrained, {"visual.", "audio."});
  return model;
}

TrainResult fine_tune(const Checkpoint& pretrained, TrainConfig config, const TrainData& data,
                      const EpochCallback& on_epoch) {
  auto model = fine_tune_model(pretrained, config);
  if (is_contrastive(config.regime)) config.regime = Regime::attention_bce_margin;
  TrainResult r = train(config, *model, data, on_epoch);
  r.best.meta.set("fine_tuned_from", pretrained.meta.get("regime"));
  return r;
}

#define AVC_INSTANTIATE_TRAINER(T)                                                                          \
  template TrainResult train(const TrainConfig&, AvModel<T>&, const TrainData&, const EpochCallback&);     \
  template TrainResult train<T>(const TrainConfig&, const TrainData&, const EpochCallback&);                \
  template std::vector<int> predict_correlation(AvModel<T>&, const FeatureBank&,                           \
                                                const std::vector<PairRecord>&);                            \
  template double correlation_accuracy(AvModel<T>&, const FeatureBank&, const std::vector<PairRecord>&);   \
  template void fit_head(AvModel<T>&, const FeatureBank&, const std::vector<PairRecord>&);                 \
  template std::vector<std::vector<float>> embed_items(AvModel<T>&, const FeatureBank&,                    \
                                                       const std::vector<ItemRef>&, Stream);

AVC_INSTANTIATE_TRAINER(float)
AVC_INSTANTIATE_TRAINER(double)

}  // namespace avc
