#pragma once

// Flat `key = value` configuration files.
//
//   # comment
//   format = 1
//   include = base.cfg        (path relative to the including file)
//   seg.steps = 200
//
// Later assignments override earlier ones; includes are expanded in place.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dlseg {

class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static KvConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Apply a `key=value` override string.
  void apply_override(const std::string& assignment);
  void merge(const KvConfig& other);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> find(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key, long fallback) const;
  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;

  /// Strict accessors: throw ConfigError when the key is absent.
  std::string require_string(const std::string& key) const;
  long require_int(const std::string& key) const;
  double require_double(const std::string& key) const;

  /// Canonical text: sorted `key = value` lines. Stable input for hashing.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  void parse_into(const std::string& text, const std::filesystem::path& base_dir, int depth);

  std::map<std::string, std::string> values_;
};

/// Comma-separated lists; `key` only labels error messages.
std::vector<double> parse_doubles(const std::string& key, const std::string& text);
std::vector<int> parse_ints(const std::string& key, const std::string& text);

std::string format_doubles(const std::vector<double>& v);
std::string format_double(double v);

}  // namespace dlseg
