#pragma once

// Line-oriented run configuration:
//
//   # comment
//   [section]
//   key = value
//
// Keys are addressed as "section.key". Every lookup records the key so unknown keys
// can be reported after the run configuration has been read.

#include "muskat/core.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <cmath>
#include <map>
#include <sstream>
#include <set>
#include <string>

namespace muskat::config {

struct Entry {
  std::string value;
  int line = 0;
};

class Config {
public:
  Config() = default;

  static Config parse(std::istream& is, const std::string& source = "<config>") {
    Config c;
    c.source_ = source;
    std::string raw, section;
    int line = 0;
    while (std::getline(is, raw)) {
      ++line;
      const std::string s = trim(strip_comment(raw));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']' || s.size() < 3) c.fail(line, "malformed section header '" + s + "'");
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) c.fail(line, "expected 'key = value', got '" + s + "'");
      const std::string key = trim(s.substr(0, eq));
      if (key.empty()) c.fail(line, "empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (c.entries_.count(full)) c.fail(line, "duplicate key '" + full + "' (first on line " +
                                                   std::to_string(c.entries_[full].line) + ")");
      c.entries_[full] = {trim(s.substr(eq + 1)), line};
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open configuration file");
    return parse(f, path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }

  std::string require_string(const std::string& key) const {
    used_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(source_ + ": missing required key '" + key + "'");
    return it->second.value;
  }

  std::string get_string(const std::string& key, const std::string& def) const {
    used_.insert(key);
    auto it = entries_.find(key);
    return it == entries_.end() ? def : it->second.value;
  }

  double get_double(const std::string& key, double def) const {
    used_.insert(key);
    auto it = entries_.find(key);
    return it == entries_.end() ? def : to_double(it->first, it->second);
  }

  long get_int(const std::string& key, long def) const {
    used_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return def;
    const double v = to_double(it->first, it->second);
    if (v != std::floor(v) || std::abs(v) > 1e15) fail(it->second.line, "key '" + key + "' must be an integer");
    return static_cast<long>(v);
  }

  std::vector<double> get_list(const std::string& key, const std::vector<double>& def) const {
    used_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return def;
    std::vector<double> out;
    std::stringstream ss(it->second.value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(it->first, {trim(item), it->second.line}));
    if (out.empty()) fail(it->second.line, "key '" + key + "' needs at least one value");
    return out;
  }

  /// Fails with the line of `key` (or the source alone when absent).
  [[noreturn]] void fail_key(const std::string& key, const std::string& msg) const {
    auto it = entries_.find(key);
    fail(it == entries_.end() ? 0 : it->second.line, msg);
  }

  /// Keys never looked up, in file order.
  std::vector<std::string> unused() const {
    std::vector<std::pair<int, std::string>> v;
    for (const auto& [k, e] : entries_)
      if (!used_.count(k)) v.push_back({e.line, k});
    std::sort(v.begin(), v.end());
    std::vector<std::string> out;
    for (auto& [l, k] : v) out.push_back(k);
    return out;
  }

  /// Sorted "key = value" lines, the input of the configuration hash.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, e] : entries_) out += k + " = " + e.value + "\n";
    return out;
  }

  const std::string& source() const { return source_; }

private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }
  static std::string strip_comment(const std::string& s) {
    const auto p = s.find_first_of("#;");
    return p == std::string::npos ? s : s.substr(0, p);
  }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(source_ + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + msg);
  }

  double to_double(const std::string& key, const Entry& e) const {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(e.value, &pos);
    } catch (const std::exception&) {
      fail(e.line, "key '" + key + "' expects a number, got '" + e.value + "'");
    }
    if (pos != e.value.size()) fail(e.line, "key '" + key + "' expects a number, got '" + e.value + "'");
    if (!std::isfinite(v)) fail(e.line, "key '" + key + "' must be finite");
    return v;
  }

  std::string source_ = "<config>";
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> used_;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

} // namespace muskat::config
