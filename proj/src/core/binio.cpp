#include "avc/core/binio.hpp"

#include <fstream>
#include <iterator>

namespace avc::binio {

void Writer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf_.data()), std::streamsize(buf_.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

Reader Reader::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Reader(std::move(data), path.string());
}

}  // namespace avc::binio
