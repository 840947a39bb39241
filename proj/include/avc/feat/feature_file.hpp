#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace avc {

/// In-memory content of an AVF1 feature file.
///
/// Layout (little-endian): "AVF1", dtype code (u8, 1 = float32), rank (u8),
/// rank x u32 extents, then row-major float32 values.
struct FeatureArray {
  std::vector<std::uint32_t> extents;
  std::vector<float> values;
};

inline constexpr std::uint8_t kFeatureDtypeF32 = 1;

void write_feature_file(const std::filesystem::path& path, const FeatureArray& array);
FeatureArray read_feature_file(const std::filesystem::path& path);

}  // namespace avc
