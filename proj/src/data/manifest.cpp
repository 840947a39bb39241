#include "avc/data/manifest.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "avc/core/error.hpp"
#include "avc/core/rng.hpp"

namespace avc {

using nlohmann::json;

std::filesystem::path Manifest::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

bool Manifest::has_labels() const {
  if (videos.empty()) return false;
  return std::all_of(videos.begin(), videos.end(), [](const ManifestEntry& v) { return v.category.has_value(); });
}

std::vector<std::string> Manifest::categories() const {
  std::set<std::string> cats;
  for (const auto& v : videos) {
    if (v.category) cats.insert(*v.category);
  }
  return {cats.begin(), cats.end()};
}

std::size_t Manifest::find_video(const std::string& video_id) const {
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (videos[i].video_id == video_id) return i;
  }
  return std::string::npos;
}

void validate_manifest(const Manifest& manifest) {
  if (manifest.videos.empty()) throw DataError("manifest lists no videos");
  std::set<std::string> ids;
  for (const auto& v : manifest.videos) {
    if (v.video_id.empty()) throw DataError("manifest entry with empty video_id");
    if (!ids.insert(v.video_id).second) throw DataError("duplicate video_id '" + v.video_id + "' in manifest");
    if (v.frames.empty() || v.audio_segments.empty()) {
      throw DataError("video '" + v.video_id + "' has no frames or no audio segments");
    }
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestEntry e;
      e.video_id = j.at("video_id").get<std::string>();
      if (j.contains("category") && !j.at("category").is_null()) {
        const json& c = j.at("category");
        e.category = c.is_string() ? c.get<std::string>() : c.dump();
      }
      e.frames = j.at("frames").get<std::vector<std::string>>();
      e.audio_segments = j.at("audio_segments").get<std::vector<std::string>>();
      m.videos.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  validate_manifest(m);
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& v : manifest.videos) {
    json j;
    j["video_id"] = v.video_id;
    if (v.category) j["category"] = *v.category;
    j["frames"] = v.frames;
    j["audio_segments"] = v.audio_segments;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

ManifestSplit split_by_video(const Manifest& manifest, double val_fraction, double test_fraction,
                             std::uint64_t seed) {
  if (val_fraction < 0 || test_fraction < 0 || val_fraction + test_fraction >= 1.0) {
    throw Error("split fractions must be non-negative and sum to less than 1");
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < manifest.videos.size(); ++i) {
    groups[manifest.videos[i].category.value_or("")].push_back(i);
  }
  ManifestSplit split;
  std::vector<std::size_t> parts[3];
  RngStream rng(seed);
  for (auto& [cat, idx] : groups) {
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n = idx.size();
    const auto n_test = std::size_t(std::llround(double(n) * test_fraction));
    const auto n_val = std::size_t(std::llround(double(n) * val_fraction));
    for (std::size_t k = 0; k < n; ++k) parts[k < n_test ? 2 : k < n_test + n_val ? 1 : 0].push_back(idx[k]);
  }
  Manifest* dst[3] = {&split.train, &split.val, &split.test};
  for (int s = 0; s < 3; ++s) {
    std::sort(parts[s].begin(), parts[s].end());  // keep manifest order
    dst[s]->base_dir = manifest.base_dir;
    for (std::size_t i : parts[s]) dst[s]->videos.push_back(manifest.videos[i]);
  }
  return split;
}

}  // namespace avc
