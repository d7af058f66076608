#include "dlseg/kvconfig.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dlseg/errors.hpp"

namespace dlseg {
namespace {

constexpr int kMaxIncludeDepth = 8;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
  }
}

long parse_long(const std::string& key, const std::string& text) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + text + "'");
  return v;
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  KvConfig cfg;
  cfg.parse_into(text, base_dir, 0);
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  KvConfig cfg;
  cfg.parse_into(read_file(path), path.parent_path(), 0);
  return cfg;
}

void KvConfig::parse_into(const std::string& text, const std::filesystem::path& base_dir, int depth) {
  if (depth > kMaxIncludeDepth) throw ConfigError("config include depth exceeds " + std::to_string(kMaxIncludeDepth));
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (key == "include") {
      const auto path = base_dir / value;
      parse_into(read_file(path), path.parent_path(), depth + 1);
    } else {
      values_[key] = value;
    }
  }
}

void KvConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
  values_[key] = trim(assignment.substr(eq + 1));
}

void KvConfig::merge(const KvConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::optional<std::string> KvConfig::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

long KvConfig::get_int(const std::string& key, long fallback) const {
  auto v = find(key);
  return v ? parse_long(key, *v) : fallback;
}

std::uint64_t KvConfig::get_uint64(const std::string& key, std::uint64_t fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto* end = v->data() + v->size();
  auto [ptr, ec] = std::from_chars(v->data(), end, out);
  if (ec != std::errc() || ptr != end || v->empty())
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + *v + "'");
  return out;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto v = find(key);
  return v ? parse_double(key, *v) : fallback;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
  if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<double> KvConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  auto v = find(key);
  return v ? parse_doubles(key, *v) : fallback;
}

std::vector<int> KvConfig::get_ints(const std::string& key, const std::vector<int>& fallback) const {
  auto v = find(key);
  return v ? parse_ints(key, *v) : fallback;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_double(key, item));
  return out;
}

std::vector<int> parse_ints(const std::string& key, const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) out.push_back(static_cast<int>(parse_long(key, item)));
  return out;
}

std::string KvConfig::require_string(const std::string& key) const {
  auto v = find(key);
  if (!v) throw ConfigError("missing required config key '" + key + "'");
  return *v;
}

long KvConfig::require_int(const std::string& key) const { return parse_long(key, require_string(key)); }

double KvConfig::require_double(const std::string& key) const { return parse_double(key, require_string(key)); }

std::string KvConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void KvConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config " + path.string());
  out << serialize();
}

std::string format_double(double v) {
  char buf[64];
  if (std::abs(v) < 1e15 && v == std::trunc(v)) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char shorter[64];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
    if (std::stod(shorter) == v) return shorter;
  }
  return buf;
}

std::string format_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v[i]);
  }
  return out;
}

}  // namespace dlseg
