#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "avc/feat/audio.hpp"

namespace avc {

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelConfig {
  std::size_t n_mels = 64;
  std::size_t n_fft = 2048;
  std::size_t hop = 480;
  std::size_t n_frames = 100;
  int sample_rate = kSampleRate;
  double fmin = 0.0;
  double fmax = 24000.0;
  double floor = 1e-10;
};

/// Triangular mel filters on the rfft bin grid, row-major [n_mels, n_fft/2+1].
/// Filter i spans mel points i..i+2 of n_mels+2 equally spaced points between
/// hz_to_mel(fmin) and hz_to_mel(fmax), peaking at 1.
struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;
  std::vector<double> weights;
  std::vector<double> centers_hz;  // n_mels entries
  std::vector<double> edges_hz;    // n_mels + 2 entries

  double at(std::size_t mel, std::size_t bin) const { return weights[mel * n_bins + bin]; }
};

MelFilterbank mel_filterbank(std::size_t n_mels = 64, std::size_t n_fft = 2048, int sample_rate = 48000,
                             double fmin = 0.0, double fmax = 24000.0);

/// 64x100 natural-log mel power spectrogram, row-major [mel, frame].
struct MelSpec {
  static constexpr std::size_t kMels = 64;
  static constexpr std::size_t kFrames = 100;
  std::vector<double> values;
};

/// Reusable extractor: Hann-windowed, centered (reflect-padded) STFT with
/// frames at t = k * hop for k < n_frames, power spectrum, mel projection,
/// ln(max(x, floor)).
class LogMelExtractor {
 public:
  explicit LogMelExtractor(MelConfig config = {});
  ~LogMelExtractor();
  LogMelExtractor(const LogMelExtractor&) = delete;
  LogMelExtractor& operator=(const LogMelExtractor&) = delete;

  const MelConfig& config() const { return config_; }
  const MelFilterbank& filterbank() const { return bank_; }

  /// Row-major [n_mels, n_frames] features. The clip must hold exactly
  /// n_frames * hop samples at the configured rate.
  std::vector<double> compute(const AudioClip& clip) const;

  /// Power spectrum [n_frames, n_fft/2+1] (exposed for spectral tests).
  std::vector<double> power_spectrogram(const AudioClip& clip) const;

 private:
  MelConfig config_;
  MelFilterbank bank_;
  std::vector<double> window_;
  struct Fft;
  std::unique_ptr<Fft> fft_;
};

/// Convenience wrapper with the default configuration.
MelSpec log_mel(const AudioClip& clip);

}  // namespace avc
