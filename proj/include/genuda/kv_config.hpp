#pragma once

// Flat `key = value` configuration files, one entry per line, `#` comments.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace genuda {

class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KvConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void erase(const std::string& key) { values_.erase(key); }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  double get_double(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  int64_t get_int(const std::string& key) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

  // Keys starting with `prefix`, with the prefix stripped.
  std::map<std::string, std::string> with_prefix(const std::string& prefix) const;

  // Throws ErrorCode::kConfig naming the first key not in `known` (exact keys) and not
  // matching any of `known_prefixes`.
  void require_known(const std::set<std::string>& known,
                     const std::vector<std::string>& known_prefixes = {}) const;

  // Canonical serialization: keys sorted, `key = value\n`. Stable under key reordering.
  std::string serialize() const;

 private:
  std::map<std::string, std::string> values_;
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary sibling and renames over the destination.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Git blob-style SHA-1 ("blob <len>\0<content>"), lowercase hex.
std::string content_hash(const std::string& content);

}  // namespace genuda
