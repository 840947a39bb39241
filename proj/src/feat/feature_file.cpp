#include "avc/feat/feature_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "avc/core/error.hpp"

namespace avc {

static_assert(std::endian::native == std::endian::little, "feature files are little-endian");

void write_feature_file(const std::filesystem::path& path, const FeatureArray& array) {
  std::size_t count = 1;
  for (auto e : array.extents) count *= e;
  if (array.extents.empty() || array.extents.size() > 255 || count != array.values.size()) {
    throw DataError("feature array extents do not match its value count");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file " + path.string());
  out.write("AVF1", 4);
  const char header[2] = {char(kFeatureDtypeF32), char(array.extents.size())};
  out.write(header, 2);
  out.write(reinterpret_cast<const char*>(array.extents.data()),
            std::streamsize(array.extents.size() * sizeof(std::uint32_t)));
  out.write(reinterpret_cast<const char*>(array.values.data()),
            std::streamsize(array.values.size() * sizeof(float)));
  if (!out) throw DataError("failed writing " + path.string());
}

FeatureArray read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 6 || std::memcmp(bytes.data(), "AVF1", 4) != 0) {
    throw DataError("not an AVF1 feature file: " + path.string());
  }
  if (std::uint8_t(bytes[4]) != kFeatureDtypeF32) {
    throw DataError("unsupported dtype code in " + path.string());
  }
  const std::size_t rank = std::uint8_t(bytes[5]);
  FeatureArray array;
  array.extents.resize(rank);
  const std::size_t header = 6 + rank * 4;
  if (rank == 0 || bytes.size() < header) throw DataError("truncated header in " + path.string());
  std::memcpy(array.extents.data(), bytes.data() + 6, rank * 4);
  std::size_t count = 1;
  for (auto e : array.extents) count *= e;
  if (bytes.size() != header + count * 4) {
    throw DataError("feature file size does not match its extents: " + path.string());
  }
  array.values.resize(count);
  std::memcpy(array.values.data(), bytes.data() + header, count * 4);
  return array;
}

}  // namespace avc
