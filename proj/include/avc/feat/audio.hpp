#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace avc {

inline constexpr int kSampleRate = 48000;
inline constexpr std::size_t kSegmentSamples = 48000;

/// Mono audio with samples in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
};

/// Raw decoded WAV content before any channel mixing.
struct WavData {
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  bool is_float = false;
  std::vector<float> interleaved;  // scaled to [-1, 1]
};

/// Parses a RIFF/WAVE file holding 8/16/24/32-bit integer PCM or 32-bit
/// float samples. Throws DataError for anything else.
WavData read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
void write_wav16(const std::filesystem::path& path, const std::vector<float>& samples,
                 int sample_rate);

/// Stereo-to-mono averaging only; no resampling.
AudioClip to_mono(const WavData& wav);

/// Linear-interpolation resampler. Output length is round(n * to / from).
AudioClip resample_linear(const AudioClip& clip, int target_rate);

/// Reads a WAV, mixes to mono and resamples to 48 kHz.
AudioClip ingest_audio(const std::filesystem::path& path);

/// Splits a 48 kHz clip into 1-second segments of exactly 48 000 samples;
/// the last segment is zero-padded.
std::vector<AudioClip> split_seconds(const AudioClip& clip);

/// First 48 000 samples of the clip, zero-padded if short.
AudioClip first_second(const AudioClip& clip);

}  // namespace avc
