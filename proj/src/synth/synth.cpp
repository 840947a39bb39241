#include "avc/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "avc/core/error.hpp"
#include "avc/core/parallel.hpp"

namespace avc {

namespace fs = std::filesystem;

void SynthSpec::validate() const {
  if (n_classes < 2) throw Error("synth: n_classes must be at least 2");
  if (clips_per_class < 1) throw Error("synth: clips_per_class must be positive");
  if (seconds_per_clip < 1) throw Error("synth: seconds_per_clip must be positive");
  if (position_jitter < 0 || position_jitter > 0.3) throw Error("synth: position_jitter must lie in [0, 0.3]");
  if (scale_jitter < 0 || scale_jitter >= 1) throw Error("synth: scale_jitter must lie in [0, 1)");
  if (!std::isfinite(audio_snr_db)) throw Error("synth: audio_snr_db must be finite");
  if (image_size < 16) throw Error("synth: image_size must be at least 16");
}

KeyValues SynthSpec::to_kv() const {
  KeyValues kv;
  kv.set("n_classes", std::to_string(n_classes));
  kv.set("clips_per_class", std::to_string(clips_per_class));
  kv.set("seconds_per_clip", std::to_string(seconds_per_clip));
  kv.set("seed", std::to_string(seed));
  kv.set("position_jitter", format_double(position_jitter));
  kv.set("scale_jitter", format_double(scale_jitter));
  kv.set("audio_snr_db", format_double(audio_snr_db));
  kv.set("image_size", std::to_string(image_size));
  return kv;
}

SynthSpec SynthSpec::from_kv(const KeyValues& kv) {
  kv.require_known({"n_classes", "clips_per_class", "seconds_per_clip", "seed", "position_jitter",
                    "scale_jitter", "audio_snr_db", "image_size"});
  SynthSpec s;
  auto size_of = [&](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(key, std::int64_t(fallback));
    if (v < 0) throw Error(std::string("synth: ") + key + " must be non-negative");
    return std::size_t(v);
  };
  s.n_classes = size_of("n_classes", s.n_classes);
  s.clips_per_class = size_of("clips_per_class", s.clips_per_class);
  s.seconds_per_clip = size_of("seconds_per_clip", s.seconds_per_clip);
  s.seed = std::uint64_t(size_of("seed", 0));
  s.position_jitter = kv.get_double("position_jitter", s.position_jitter);
  s.scale_jitter = kv.get_double("scale_jitter", s.scale_jitter);
  s.audio_snr_db = kv.get_double("audio_snr_db", s.audio_snr_db);
  s.image_size = size_of("image_size", s.image_size);
  s.validate();
  return s;
}

const char* to_string(SynthShape s) {
  switch (s) {
    case SynthShape::disc: return "disc";
    case SynthShape::square: return "square";
    case SynthShape::triangle: return "triangle";
    case SynthShape::ring: return "ring";
  }
  return "?";
}

namespace {

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 360.0) / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (int(hp)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  auto q = [&](double t) { return std::uint8_t(std::lround(255.0 * (t + m))); };
  return {q(r), q(g), q(b)};
}

// (u, v) are offsets from the shape centre in units of its radius, y down.
bool inside(SynthShape shape, double u, double v) {
  switch (shape) {
    case SynthShape::disc: return u * u + v * v <= 1.0;
    case SynthShape::square: return std::fabs(u) <= 0.8 && std::fabs(v) <= 0.8;
    case SynthShape::triangle: return v >= -1.0 && v <= 0.75 && std::fabs(u) <= 0.95 * (v + 1.0) / 1.75;
    case SynthShape::ring: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.3;
    }
  }
  return false;
}

std::uint8_t clamp_u8(double x) { return std::uint8_t(std::clamp(std::lround(x), 0L, 255L)); }

}  // namespace

ClassStyle class_style(std::size_t k, std::size_t n_classes) {
  ClassStyle s;
  s.shape = static_cast<SynthShape>(k % 4);
  s.color = hsv_to_rgb(360.0 * double(k) / double(n_classes), 0.85, 0.95);
  return s;
}

double class_tone_hz(std::size_t k) { return 220.0 * std::exp2(double(k) / 4.0); }

RgbImage render_frame(const SynthSpec& spec, std::size_t k, RngStream& rng) {
  const ClassStyle style = class_style(k, spec.n_classes);
  const double side = double(spec.image_size);
  const double cx = side * (0.5 + rng.uniform(-spec.position_jitter, spec.position_jitter));
  const double cy = side * (0.5 + rng.uniform(-spec.position_jitter, spec.position_jitter));
  const double radius = side * 0.2 * (1.0 + rng.uniform(-spec.scale_jitter, spec.scale_jitter));
  const double background = rng.uniform(30.0, 90.0);

  RgbImage img;
  img.height = img.width = spec.image_size;
  img.pixels.resize(img.height * img.width * 3);
  std::vector<double> noise(img.height * img.width);
  rng.normals(noise);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double u = (double(x) + 0.5 - cx) / radius;
      const double v = (double(y) + 0.5 - cy) / radius;
      const bool in = inside(style.shape, u, v);
      const double n = 6.0 * noise[y * img.width + x];
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = in ? double(style.color[c]) : background;
        img.pixels[(y * img.width + x) * 3 + c] = clamp_u8(base + n);
      }
    }
  }
  return img;
}

AudioClip render_segment(const SynthSpec& spec, std::size_t k, RngStream& rng) {
  const double f0 = class_tone_hz(k);
  const double amplitude = rng.uniform(0.3, 0.6);
  double gain_power = 0;
  std::array<double, 3> phase{};
  for (std::size_t h = 0; h < 3; ++h) {
    phase[h] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    gain_power += kHarmonicGains[h] * kHarmonicGains[h];
  }
  const double signal_power = amplitude * amplitude * gain_power / 2.0;
  const double noise_sd = std::sqrt(signal_power / std::pow(10.0, spec.audio_snr_db / 10.0));

  std::vector<double> noise(kSegmentSamples);
  rng.normals(noise);
  // Each harmonic is a unit phasor advanced by a fixed rotation per sample.
  std::array<std::complex<double>, 3> z, step;
  for (std::size_t h = 0; h < 3; ++h) {
    z[h] = std::polar(1.0, phase[h]);
    step[h] = std::polar(1.0, 2.0 * std::numbers::pi * f0 * double(h + 1) / kSampleRate);
  }
  AudioClip clip;
  clip.samples.resize(kSegmentSamples);
  for (std::size_t n = 0; n < kSegmentSamples; ++n) {
    double s = 0;
    for (std::size_t h = 0; h < 3; ++h) {
      s += kHarmonicGains[h] * z[h].imag();
      z[h] *= step[h];
    }
    clip.samples[n] = float(amplitude * s + noise_sd * noise[n]);
  }
  return clip;
}

std::string synth_video_id(std::size_t k, std::size_t clip) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "c%zu_%04zu", k, clip);
  return buf;
}

Manifest generate(const SynthSpec& spec, const fs::path& out_dir, std::size_t threads) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  Manifest manifest;
  manifest.base_dir = out_dir;
  manifest.videos.resize(spec.n_classes * spec.clips_per_class);
  const RngStream root(spec.seed);
  const std::size_t n = manifest.videos.size();
  parallel_for(n, worker_count(n, threads), [&](std::size_t c, std::size_t) {
    const std::size_t k = c / spec.clips_per_class, j = c % spec.clips_per_class;
    RngStream rng = root.fork(c);
    RngStream visual = rng.fork(0), audio = rng.fork(1);
    ManifestEntry& entry = manifest.videos[c];
    entry.video_id = synth_video_id(k, j);
    entry.category = std::to_string(k);
    const fs::path frame_dir = fs::path("frames") / entry.video_id;
    const fs::path audio_dir = fs::path("audio") / entry.video_id;
    std::error_code dir_ec;
    fs::create_directories(out_dir / frame_dir, dir_ec);
    if (!dir_ec) fs::create_directories(out_dir / audio_dir, dir_ec);
    if (dir_ec) throw DataError("cannot create clip directories under " + out_dir.string());
    for (std::size_t i = 0; i < spec.seconds_per_clip; ++i) {
      const fs::path frame = frame_dir / (std::to_string(i) + ".png");
      const fs::path segment = audio_dir / (std::to_string(i) + ".wav");
      write_png(out_dir / frame, render_frame(spec, k, visual));
      write_wav16(out_dir / segment, render_segment(spec, k, audio).samples, kSampleRate);
      entry.frames.push_back(frame.generic_string());
      entry.audio_segments.push_back(segment.generic_string());
    }
  });
  write_manifest(out_dir / "manifest.jsonl", manifest);
  std::ofstream spec_out(out_dir / "spec.txt", std::ios::trunc);
  spec_out << spec.to_kv().to_text();
  if (!spec_out) throw DataError("failed writing " + (out_dir / "spec.txt").string());
  return manifest;
}

}  // namespace avc
