#include "avc/feat/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "avc/core/error.hpp"

namespace avc {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

namespace {

std::uint32_t u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
std::uint16_t u16le(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
  os.write(b, 4);
}
void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {char(v), char(v >> 8)};
  os.write(b, 2);
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file" + where);
  }

  WavData wav;
  int format = -1, block_align = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = u32le(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw DataError("truncated fmt chunk" + where);
      format = u16le(chunk + 8);
      wav.channels = u16le(chunk + 10);
      wav.sample_rate = int(u32le(chunk + 12));
      block_align = u16le(chunk + 20);
      wav.bits_per_sample = u16le(chunk + 22);
      if (format == 0xFFFE) {
        if (avail < 26) throw DataError("truncated WAVE_FORMAT_EXTENSIBLE header" + where);
        format = u16le(chunk + 8 + 24);  // first two bytes of the sub-format GUID
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }
  if (format < 0) throw DataError("missing fmt chunk" + where);
  if (!data) throw DataError("missing data chunk" + where);
  if (format != 1 && format != 3) {
    throw DataError("unsupported (compressed) WAV format code " + std::to_string(format) + where);
  }
  wav.is_float = format == 3;
  const int bits = wav.bits_per_sample;
  const bool ok_bits = wav.is_float ? bits == 32 : (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  if (!ok_bits) throw DataError("unsupported sample width " + std::to_string(bits) + where);
  if (wav.channels != 1 && wav.channels != 2) {
    throw DataError("only mono or stereo WAV is supported, got " + std::to_string(wav.channels) +
                    " channels" + where);
  }
  if (wav.sample_rate <= 0) throw DataError("invalid sample rate" + where);
  const int bytes_per = bits / 8;
  if (block_align != bytes_per * wav.channels) throw DataError("inconsistent block alignment" + where);

  const std::size_t count = data_size / std::size_t(bytes_per);
  const std::size_t frames = count / std::size_t(wav.channels);
  if (frames == 0) throw DataError("WAV file has no samples" + where);
  wav.interleaved.resize(frames * std::size_t(wav.channels));
  for (std::size_t i = 0; i < wav.interleaved.size(); ++i) {
    const unsigned char* p = data + i * std::size_t(bytes_per);
    double v;
    if (wav.is_float) {
      float f;
      std::memcpy(&f, p, 4);
      v = std::isfinite(f) ? std::clamp(double(f), -1.0, 1.0) : 0.0;
    } else if (bits == 8) {
      v = (double(p[0]) - 128.0) / 128.0;
    } else if (bits == 16) {
      v = double(std::int16_t(u16le(p))) / 32768.0;
    } else if (bits == 24) {
      std::int32_t s = std::int32_t(p[0] | p[1] << 8 | p[2] << 16);
      if (s & 0x800000) s -= 0x1000000;
      v = double(s) / 8388608.0;
    } else {
      v = double(std::int32_t(u32le(p))) / 2147483648.0;
    }
    wav.interleaved[i] = float(v);
  }
  return wav;
}

void write_wav16(const std::filesystem::path& path, const std::vector<float>& samples,
                 int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write WAV file " + path.string());
  const std::uint32_t data_bytes = std::uint32_t(samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, std::uint32_t(sample_rate));
  put_u32(out, std::uint32_t(sample_rate * 2));
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  std::vector<char> pcm(samples.size() * 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double s = std::clamp(double(samples[i]), -1.0, 1.0);
    const auto q = std::int16_t(std::lround(std::clamp(s * 32768.0, -32768.0, 32767.0)));
    pcm[2 * i] = char(q & 0xFF);
    pcm[2 * i + 1] = char((q >> 8) & 0xFF);
  }
  out.write(pcm.data(), std::streamsize(pcm.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

AudioClip to_mono(const WavData& wav) {
  AudioClip clip;
  clip.sample_rate = wav.sample_rate;
  const std::size_t ch = std::size_t(wav.channels);
  const std::size_t frames = wav.interleaved.size() / ch;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < ch; ++c) s += wav.interleaved[i * ch + c];
    clip.samples[i] = float(s / double(ch));
  }
  return clip;
}

AudioClip resample_linear(const AudioClip& clip, int target_rate) {
  if (clip.samples.empty()) throw DataError("cannot resample an empty clip");
  if (clip.sample_rate == target_rate) return clip;
  const std::size_t n = clip.samples.size();
  const auto out_len = std::size_t(std::max<long long>(
      1, std::llround(double(n) * double(target_rate) / double(clip.sample_rate))));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  const double step = double(clip.sample_rate) / double(target_rate);
  for (std::size_t j = 0; j < out_len; ++j) {
    const double t = double(j) * step;
    const auto i0 = std::size_t(t);
    if (i0 + 1 >= n) {
      out.samples[j] = clip.samples[n - 1];
      continue;
    }
    const double frac = t - double(i0);
    out.samples[j] = float((1.0 - frac) * clip.samples[i0] + frac * clip.samples[i0 + 1]);
  }
  return out;
}

AudioClip ingest_audio(const std::filesystem::path& path) {
  return resample_linear(to_mono(read_wav(path)), kSampleRate);
}

std::vector<AudioClip> split_seconds(const AudioClip& clip) {
  if (clip.sample_rate != kSampleRate) throw DataError("split_seconds expects a 48 kHz clip");
  std::vector<AudioClip> out;
  for (std::size_t start = 0; start < clip.samples.size(); start += kSegmentSamples) {
    AudioClip seg;
    seg.samples.assign(kSegmentSamples, 0.0f);
    const std::size_t len = std::min(kSegmentSamples, clip.samples.size() - start);
    std::copy_n(clip.samples.begin() + std::ptrdiff_t(start), len, seg.samples.begin());
    out.push_back(std::move(seg));
  }
  return out;
}

AudioClip first_second(const AudioClip& clip) {
  if (clip.samples.empty()) throw DataError("empty audio clip");
  return split_seconds(clip).front();
}

}  // namespace avc
