#include "avc/data/sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <span>

#include "avc/core/error.hpp"

namespace avc {

const char* to_string(PairSource s) {
  switch (s) {
    case PairSource::aligned: return "aligned";
    case PairSource::diff_label: return "diff_label";
    case PairSource::diff_video: return "diff_video";
    case PairSource::diff_time: return "diff_time";
  }
  return "aligned";
}

PairSource parse_pair_source(const std::string& text) {
  if (text == "aligned") return PairSource::aligned;
  if (text == "diff_label") return PairSource::diff_label;
  if (text == "diff_video") return PairSource::diff_video;
  if (text == "diff_time") return PairSource::diff_time;
  throw Error("unknown pair strategy '" + text + "' (expected diff_label, diff_video or diff_time)");
}

std::vector<PairRecord> make_positive_pairs(const Manifest& manifest, std::size_t per_video, RngStream& rng) {
  if (per_video < 1) throw Error("make_positive_pairs: per_video must be at least 1");
  std::vector<PairRecord> out;
  for (std::size_t v = 0; v < manifest.videos.size(); ++v) {
    const std::size_t n = manifest.videos[v].seconds();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    const std::size_t take = std::min(per_video, n);
    // Partial Fisher-Yates: the first `take` slots form a uniform sample.
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + std::size_t(rng.below(n - i));
      std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < take; ++i) {
      out.push_back({{v, idx[i]}, {v, idx[i]}, 1, PairSource::aligned});
    }
  }
  return out;
}

namespace {

std::size_t pick(const std::vector<std::size_t>& items, RngStream& rng) {
  return items[std::size_t(rng.below(items.size()))];
}

}  // namespace

std::vector<PairRecord> make_negative_pairs(const Manifest& manifest, PairSource strategy, std::size_t count,
                                            RngStream& rng) {
  const auto& videos = manifest.videos;
  std::vector<PairRecord> out;
  out.reserve(count);
  switch (strategy) {
    case PairSource::aligned:
      throw Error("make_negative_pairs: 'aligned' is not a negative strategy");

    case PairSource::diff_label: {
      if (!manifest.has_labels()) throw DataError("diff_label negatives need a category on every video");
      std::map<std::string, std::vector<std::size_t>> by_cat;
      for (std::size_t v = 0; v < videos.size(); ++v) by_cat[*videos[v].category].push_back(v);
      if (by_cat.size() < 2) {
        throw DataError("diff_label negatives need at least two categories; manifest has only '" +
                        by_cat.begin()->first + "'");
      }
      // Candidate audio videos per category: every video of another category.
      std::map<std::string, std::vector<std::size_t>> others;
      for (const auto& [cat, _] : by_cat) {
        auto& o = others[cat];
        for (std::size_t v = 0; v < videos.size(); ++v) {
          if (*videos[v].category != cat) o.push_back(v);
        }
      }
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t fv = std::size_t(rng.below(videos.size()));
        const std::size_t av = pick(others[*videos[fv].category], rng);
        out.push_back({{fv, std::size_t(rng.below(videos[fv].seconds()))},
                       {av, std::size_t(rng.below(videos[av].seconds()))},
                       0,
                       strategy});
      }
      break;
    }

    case PairSource::diff_video: {
      if (videos.size() < 2) throw DataError("diff_video negatives need at least two videos");
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t fv = std::size_t(rng.below(videos.size()));
        std::size_t av = std::size_t(rng.below(videos.size() - 1));
        if (av >= fv) ++av;
        out.push_back({{fv, std::size_t(rng.below(videos[fv].seconds()))},
                       {av, std::size_t(rng.below(videos[av].seconds()))},
                       0,
                       strategy});
      }
      break;
    }

    case PairSource::diff_time: {
      std::vector<std::size_t> eligible;
      for (std::size_t v = 0; v < videos.size(); ++v) {
        if (videos[v].seconds() > kMinTimeGap) eligible.push_back(v);
      }
      if (eligible.empty()) {
        throw DataError("diff_time negatives need a video of at least " + std::to_string(kMinTimeGap + 1) +
                        " seconds");
      }
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t v = pick(eligible, rng);
        const std::size_t n = videos[v].seconds();
        std::size_t i, j;
        do {
          i = std::size_t(rng.below(n));
          j = std::size_t(rng.below(n));
        } while ((i > j ? i - j : j - i) < kMinTimeGap);
        out.push_back({{v, i}, {v, j}, 0, strategy});
      }
      break;
    }
  }
  return out;
}

std::vector<Batch> balanced_batches(const std::vector<PairRecord>& positives,
                                    const std::vector<PairRecord>& negatives, std::size_t batch_size,
                                    RngStream& rng) {
  if (batch_size == 0 || batch_size % 2 != 0) {
    throw Error("balanced_batches: batch size must be even and positive, got " + std::to_string(batch_size));
  }
  std::vector<PairRecord> pos = positives, neg = negatives;
  rng.shuffle(std::span<PairRecord>(pos));
  rng.shuffle(std::span<PairRecord>(neg));
  const std::size_t half = batch_size / 2;
  const std::size_t n_batches = std::min(pos.size(), neg.size()) / half;
  std::vector<Batch> out(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    Batch& batch = out[b];
    batch.insert(batch.end(), pos.begin() + long(b * half), pos.begin() + long((b + 1) * half));
    batch.insert(batch.end(), neg.begin() + long(b * half), neg.begin() + long((b + 1) * half));
    rng.shuffle(std::span<PairRecord>(batch));
  }
  return out;
}

std::vector<Batch> contrastive_batches(const Manifest& manifest, const std::vector<PairRecord>& positives,
                                       std::size_t n, RngStream& rng) {
  if (n < 2) throw Error("contrastive_batches: batch size must be at least 2");
  for (const auto& p : positives) {
    if (p.y != 1) throw Error("contrastive_batches: expects aligned positive pairs only");
  }
  const bool labels = manifest.has_labels();
  // Group key per pair: category when labelled, otherwise the video.
  auto key = [&](const PairRecord& p) {
    return labels ? *manifest.videos[p.frame.video].category : manifest.videos[p.frame.video].video_id;
  };
  std::map<std::string, std::size_t> group_sizes;
  for (const auto& p : positives) ++group_sizes[key(p)];
  if (group_sizes.size() < n) {
    std::string listing;
    for (const auto& [k, c] : group_sizes) listing += (listing.empty() ? "" : ", ") + k + " (" + std::to_string(c) + ")";
    throw DataError("contrastive batch size " + std::to_string(n) + " needs " + std::to_string(n) + " distinct " +
                    (labels ? "categories" : "videos") + " but only " + std::to_string(group_sizes.size()) +
                    " exist: " + listing);
  }

  std::vector<PairRecord> pool = positives;
  rng.shuffle(std::span<PairRecord>(pool));
  std::vector<Batch> out;
  while (pool.size() >= n) {
    Batch batch;
    std::set<std::string> used;
    std::vector<PairRecord> taken;
    bool complete = true;
    for (std::size_t slot = 0; slot < n && complete; ++slot) {
      bool filled = false;
      for (std::size_t attempt = 0; attempt < kMaxSlotAttempts && !pool.empty(); ++attempt) {
        const std::size_t i = std::size_t(rng.below(pool.size()));
        if (used.count(key(pool[i]))) continue;
        used.insert(key(pool[i]));
        batch.push_back(pool[i]);
        pool[i] = pool.back();
        pool.pop_back();
        filled = true;
        break;
      }
      complete = filled;
    }
    if (!complete) break;
    out.push_back(std::move(batch));
  }
  return out;
}

void write_pairs_jsonl(const std::filesystem::path& path, const Manifest& manifest,
                       const std::vector<PairRecord>& pairs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write pairs file " + path.string());
  for (const auto& p : pairs) {
    const auto& fv = manifest.videos.at(p.frame.video);
    const auto& av = manifest.videos.at(p.audio.video);
    nlohmann::ordered_json j;
    j["frame"] = fv.frames.at(p.frame.index);
    j["audio"] = av.audio_segments.at(p.audio.index);
    j["y"] = p.y;
    j["source"] = to_string(p.source);
    j["frame_video"] = fv.video_id;
    j["frame_index"] = p.frame.index;
    j["audio_video"] = av.video_id;
    j["audio_index"] = p.audio.index;
    if (fv.category) j["category"] = *fv.category;
    if (av.category) j["audio_category"] = *av.category;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace avc
