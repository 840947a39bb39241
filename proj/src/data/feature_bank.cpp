#include "avc/data/feature_bank.hpp"

#include <algorithm>
#include <memory>

#include "avc/core/error.hpp"
#include "avc/core/parallel.hpp"
#include "avc/feat/feature_file.hpp"
#include "avc/feat/image.hpp"
#include "avc/feat/mel.hpp"

namespace avc {

namespace fs = std::filesystem;

namespace {

bool is_feature_file(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".avf") == 0;
}

std::vector<float> load_mel_features(const fs::path& path, const LogMelExtractor& extractor) {
  if (is_feature_file(path.string())) {
    FeatureArray a = read_feature_file(path);
    if (a.extents != std::vector<std::uint32_t>{64, 100}) {
      throw DataError(path.string() + ": expected a [64, 100] log-mel array");
    }
    return std::move(a.values);
  }
  const std::vector<double> v = extractor.compute(first_second(ingest_audio(path)));
  return {v.begin(), v.end()};
}

}  // namespace

std::vector<float> load_frame_features(const fs::path& path, std::size_t visual_size) {
  FrameImage frame;
  if (is_feature_file(path.string())) {
    FeatureArray a = read_feature_file(path);
    if (a.extents.size() != 3 || a.extents[0] != 3 || a.extents[1] != a.extents[2]) {
      throw DataError(path.string() + ": expected a [3, s, s] frame array");
    }
    frame.size = a.extents[1];
    frame.pixels = std::move(a.values);
  } else {
    frame = load_frame(path);
  }
  try {
    return area_downsample(frame, visual_size).pixels;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

FeatureBank::FeatureBank(const Manifest& manifest, std::size_t visual_size, std::size_t threads)
    : visual_size_(visual_size) {
  if (visual_size == 0) throw Error("FeatureBank: visual_size must be positive");
  std::vector<ItemRef> refs;
  offsets_.push_back(0);
  for (std::size_t v = 0; v < manifest.videos.size(); ++v) {
    const std::size_t n = manifest.videos[v].seconds();
    for (std::size_t i = 0; i < n; ++i) refs.push_back({v, i});
    offsets_.push_back(offsets_.back() + n);
  }
  frames_.resize(refs.size() * frame_values());
  mels_.resize(refs.size() * kMelValues);

  const std::size_t workers = worker_count(refs.size(), threads);
  std::vector<std::unique_ptr<LogMelExtractor>> extractors;
  for (std::size_t w = 0; w < workers; ++w) extractors.push_back(std::make_unique<LogMelExtractor>());
  parallel_for(refs.size(), workers, [&](std::size_t k, std::size_t w) {
    const auto& video = manifest.videos[refs[k].video];
    const auto px = load_frame_features(manifest.resolve(video.frames[refs[k].index]), visual_size_);
    std::copy(px.begin(), px.end(), frames_.begin() + std::ptrdiff_t(k * frame_values()));
    const auto mel = load_mel_features(manifest.resolve(video.audio_segments[refs[k].index]), *extractors[w]);
    std::copy(mel.begin(), mel.end(), mels_.begin() + std::ptrdiff_t(k * kMelValues));
  });
}

std::size_t FeatureBank::slot(const ItemRef& ref) const {
  if (ref.video + 1 >= offsets_.size() || offsets_[ref.video] + ref.index >= offsets_[ref.video + 1]) {
    throw Error("FeatureBank: no item for video " + std::to_string(ref.video) + ", second " +
                std::to_string(ref.index));
  }
  return offsets_[ref.video] + ref.index;
}

std::span<const float> FeatureBank::frame(const ItemRef& ref) const {
  return {frames_.data() + slot(ref) * frame_values(), frame_values()};
}

std::span<const float> FeatureBank::mel(const ItemRef& ref) const {
  return {mels_.data() + slot(ref) * kMelValues, kMelValues};
}

template <class T>
Tensor<T> FeatureBank::frames(const std::vector<ItemRef>& refs) const {
  std::vector<T> out;
  out.reserve(refs.size() * frame_values());
  for (const auto& r : refs) {
    const auto f = frame(r);
    out.insert(out.end(), f.begin(), f.end());
  }
  return Tensor<T>::from({refs.size(), 3, visual_size_, visual_size_}, std::move(out));
}

template <class T>
Tensor<T> FeatureBank::mels(const std::vector<ItemRef>& refs) const {
  std::vector<T> out;
  out.reserve(refs.size() * kMelValues);
  for (const auto& r : refs) {
    const auto f = mel(r);
    out.insert(out.end(), f.begin(), f.end());
  }
  return Tensor<T>::from({refs.size(), 1, 64, 100}, std::move(out));
}

template Tensor<float> FeatureBank::frames(const std::vector<ItemRef>&) const;
template Tensor<double> FeatureBank::frames(const std::vector<ItemRef>&) const;
template Tensor<float> FeatureBank::mels(const std::vector<ItemRef>&) const;
template Tensor<double> FeatureBank::mels(const std::vector<ItemRef>&) const;

Manifest featurize(const Manifest& manifest, const fs::path& out_dir, std::size_t visual_size, std::size_t threads) {
  const FeatureBank bank(manifest, visual_size, threads);
  Manifest out;
  out.base_dir = out_dir;
  for (std::size_t v = 0; v < manifest.videos.size(); ++v) {
    const auto& src = manifest.videos[v];
    ManifestEntry e;
    e.video_id = src.video_id;
    e.category = src.category;
    const fs::path dir = fs::path("features") / src.video_id;
    std::error_code ec;
    fs::create_directories(out_dir / dir, ec);
    if (ec) throw DataError("cannot create " + (out_dir / dir).string() + ": " + ec.message());
    for (std::size_t i = 0; i < src.seconds(); ++i) {
      const fs::path frame = dir / (std::to_string(i) + ".frame.avf");
      const fs::path mel = dir / (std::to_string(i) + ".mel.avf");
      const auto f = bank.frame({v, i});
      const auto a = bank.mel({v, i});
      write_feature_file(out_dir / frame, {{3, std::uint32_t(visual_size), std::uint32_t(visual_size)},
                                           {f.begin(), f.end()}});
      write_feature_file(out_dir / mel, {{64, 100}, {a.begin(), a.end()}});
      e.frames.push_back(frame.generic_string());
      e.audio_segments.push_back(mel.generic_string());
    }
    out.videos.push_back(std::move(e));
  }
  write_manifest(out_dir / "manifest.jsonl", out);
  return out;
}

}  // namespace avc
