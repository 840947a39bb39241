#include "avc/feat/mel.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

#include "avc/core/error.hpp"

namespace avc {

namespace {
// The FFTW planner is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate, double fmin,
                             double fmax) {
  if (n_mels < 2) throw Error("mel_filterbank: n_mels must be at least 2");
  if (n_fft < 2) throw Error("mel_filterbank: n_fft must be at least 2");
  if (fmax > sample_rate / 2.0) {
    throw Error("mel_filterbank: fmax " + std::to_string(fmax) + " Hz exceeds Nyquist " +
                std::to_string(sample_rate / 2.0) + " Hz");
  }
  if (fmin < 0.0 || fmin >= fmax) throw Error("mel_filterbank: need 0 <= fmin < fmax");

  MelFilterbank bank;
  bank.n_mels = n_mels;
  bank.n_bins = n_fft / 2 + 1;
  const double lo = hz_to_mel(fmin), hi = hz_to_mel(fmax);
  for (std::size_t i = 0; i < n_mels + 2; ++i) {
    bank.edges_hz.push_back(mel_to_hz(lo + (hi - lo) * double(i) / double(n_mels + 1)));
  }
  bank.weights.assign(n_mels * bank.n_bins, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = bank.edges_hz[m], center = bank.edges_hz[m + 1], right = bank.edges_hz[m + 2];
    bank.centers_hz.push_back(center);
    for (std::size_t k = 0; k < bank.n_bins; ++k) {
      const double f = double(k) * sample_rate / double(n_fft);
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      bank.weights[m * bank.n_bins + k] = std::max(0.0, std::min(rise, fall));
    }
  }
  return bank;
}

struct LogMelExtractor::Fft {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;
  std::mutex exec;  // guards the shared buffers

  explicit Fft(std::size_t n) {
    std::lock_guard lock(planner_mutex());
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(int(n), in, out, FFTW_ESTIMATE);
  }
  ~Fft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
};

LogMelExtractor::LogMelExtractor(MelConfig config)
    : config_(config),
      bank_(mel_filterbank(config.n_mels, config.n_fft, config.sample_rate, config.fmin, config.fmax)),
      fft_(std::make_unique<Fft>(config.n_fft)) {
  // Periodic Hann window.
  window_.resize(config_.n_fft);
  for (std::size_t i = 0; i < config_.n_fft; ++i) {
    window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(config_.n_fft));
  }
}

LogMelExtractor::~LogMelExtractor() = default;

std::vector<double> LogMelExtractor::power_spectrogram(const AudioClip& clip) const {
  const std::size_t expected = config_.n_frames * config_.hop;
  if (clip.sample_rate != config_.sample_rate) {
    throw DataError("log_mel: clip sample rate " + std::to_string(clip.sample_rate) + " Hz, expected " +
                    std::to_string(config_.sample_rate));
  }
  if (clip.samples.size() != expected) {
    throw DataError("log_mel: clip has " + std::to_string(clip.samples.size()) +
                    " samples, expected exactly " + std::to_string(expected));
  }
  const std::size_t n = clip.samples.size();
  const std::size_t nfft = config_.n_fft;
  const auto half = std::ptrdiff_t(nfft / 2);
  const std::size_t bins = nfft / 2 + 1;
  std::vector<double> power(config_.n_frames * bins);

  // Reflect padding without edge repetition: x[-k] = x[k], x[n-1+k] = x[n-1-k].
  auto sample = [&](std::ptrdiff_t idx) -> double {
    const auto last = std::ptrdiff_t(n) - 1;
    while (idx < 0 || idx > last) {
      if (idx < 0) idx = -idx;
      if (idx > last) idx = 2 * last - idx;
    }
    return clip.samples[std::size_t(idx)];
  };

  std::lock_guard lock(fft_->exec);
  for (std::size_t f = 0; f < config_.n_frames; ++f) {
    const std::ptrdiff_t start = std::ptrdiff_t(f * config_.hop) - half;
    for (std::size_t i = 0; i < nfft; ++i) fft_->in[i] = sample(start + std::ptrdiff_t(i)) * window_[i];
    fftw_execute(fft_->plan);
    for (std::size_t k = 0; k < bins; ++k) {
      const double re = fft_->out[k][0], im = fft_->out[k][1];
      power[f * bins + k] = re * re + im * im;
    }
  }
  return power;
}

std::vector<double> LogMelExtractor::compute(const AudioClip& clip) const {
  const std::vector<double> power = power_spectrogram(clip);
  const std::size_t bins = bank_.n_bins;
  std::vector<double> out(config_.n_mels * config_.n_frames);
  for (std::size_t m = 0; m < config_.n_mels; ++m) {
    const double* w = bank_.weights.data() + m * bins;
    // Each filter is zero outside one contiguous band.
    std::size_t lo = 0, hi = bins;
    while (lo < hi && w[lo] == 0.0) ++lo;
    while (hi > lo && w[hi - 1] == 0.0) --hi;
    for (std::size_t f = 0; f < config_.n_frames; ++f) {
      const double* p = power.data() + f * bins;
      double acc = 0;
      for (std::size_t k = lo; k < hi; ++k) acc += w[k] * p[k];
      out[m * config_.n_frames + f] = std::log(std::max(acc, config_.floor));
    }
  }
  return out;
}

MelSpec log_mel(const AudioClip& clip) {
  static const LogMelExtractor extractor;
  return MelSpec{extractor.compute(clip)};
}

}  // namespace avc
