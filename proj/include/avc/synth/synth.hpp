#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "avc/core/keyvalue.hpp"
#include "avc/core/rng.hpp"
#include "avc/data/manifest.hpp"
#include "avc/feat/audio.hpp"
#include "avc/feat/image.hpp"

namespace avc {

/// Parameters of the synthetic "patterns emit tones" dataset.
struct SynthSpec {
  std::size_t n_classes = 8;
  std::size_t clips_per_class = 10;
  std::size_t seconds_per_clip = 5;
  std::uint64_t seed = 0;
  double position_jitter = 0.15;  // max centre offset, fraction of the image side
  double scale_jitter = 0.25;     // relative size noise, uniform in [-s, s]
  double audio_snr_db = 25.0;
  std::size_t image_size = 224;

  void validate() const;
  KeyValues to_kv() const;
  static SynthSpec from_kv(const KeyValues& kv);
};

enum class SynthShape { disc, square, triangle, ring };
const char* to_string(SynthShape s);

/// Shape type is k mod 4; hues are spread evenly around the colour wheel.
struct ClassStyle {
  SynthShape shape = SynthShape::disc;
  std::array<std::uint8_t, 3> color{};
};

ClassStyle class_style(std::size_t k, std::size_t n_classes);

/// Fundamental of class k: 220 * 2^(k/4) Hz.
double class_tone_hz(std::size_t k);

/// Relative amplitudes of the fundamental and the two harmonics (2f, 3f).
inline constexpr std::array<double, 3> kHarmonicGains{1.0, 0.5, 0.25};

RgbImage render_frame(const SynthSpec& spec, std::size_t k, RngStream& rng);

/// One second of 48 kHz audio: harmonic tone with random amplitude and
/// phases plus white noise at the spec's SNR.
AudioClip render_segment(const SynthSpec& spec, std::size_t k, RngStream& rng);

/// "c<k>_<j>" with the clip index zero-padded to four digits.
std::string synth_video_id(std::size_t k, std::size_t clip);

/// Writes frames/<video>/<i>.png, audio/<video>/<i>.wav and manifest.jsonl
/// under `out_dir`; returns the manifest. Clip c = k * clips_per_class + j
/// draws from RngStream(seed).fork(c), so the output does not depend on
/// `threads` (0 = hardware concurrency).
Manifest generate(const SynthSpec& spec, const std::filesystem::path& out_dir, std::size_t threads = 0);

}  // namespace avc
