#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace avc {

/// Ordered `key = value` settings. Blank lines and lines starting with '#'
/// are ignored; keys and values are whitespace-trimmed.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  /// Throws Error when the key is missing.
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;

  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list of non-negative integers.
  std::vector<std::size_t> get_sizes(const std::string& key, std::vector<std::size_t> fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

  /// Throws Error naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string to_text() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string origin_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace avc
