#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "iderase/common.hpp"
#include "iderase/rng.hpp"

namespace iderase {

// Flat key=value configuration. '#' starts a comment, blank lines ignored,
// whitespace around keys/values trimmed. Later assignments win.
class Config {
 public:
  static Config from_string(const std::string& text) {
    Config c;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      std::string t = trim(line);
      if (t.empty()) continue;
      auto eq = t.find('=');
      check(eq != std::string::npos,
            "config line " + std::to_string(lineno) + ": expected key=value");
      std::string key = trim(t.substr(0, eq));
      std::string val = trim(t.substr(eq + 1));
      check(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
      c.kv_[key] = val;
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return from_string(ss.str());
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  std::string get_str(const std::string& key) const {
    auto it = kv_.find(key);
    check(it != kv_.end(), "config missing required key: " + key);
    return it->second;
  }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  std::int64_t get_i64(const std::string& key, std::int64_t dflt) const {
    if (!has(key)) return dflt;
    return parse_i64(key, kv_.at(key));
  }

  std::int64_t get_i64(const std::string& key) const {
    return parse_i64(key, get_str(key));
  }

  double get_f64(const std::string& key, double dflt) const {
    if (!has(key)) return dflt;
    return parse_f64(key, kv_.at(key));
  }

  double get_f64(const std::string& key) const {
    return parse_f64(key, get_str(key));
  }

  bool get_bool(const std::string& key, bool dflt) const {
    if (!has(key)) return dflt;
    const std::string& v = kv_.at(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config key " + key + ": expected boolean, got '" + v + "'");
  }

  // Every present key must be known; typos fail loudly instead of silently
  // training with defaults.
  void require_known(const std::set<std::string>& known) const {
    std::string bad;
    for (const auto& [k, v] : kv_)
      if (!known.count(k)) bad += (bad.empty() ? "" : ", ") + k;
    if (!bad.empty()) throw ValidationError("unknown config keys: " + bad);
  }

  // Stable digest of the full key=value map, for stamping outputs.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [k, v] : kv_) {
      h = fnv1a_u64(fnv1a(k), h);
      h = fnv1a_u64(fnv1a(v), h);
    }
    return h;
  }

  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static std::int64_t parse_i64(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      std::int64_t r = std::stoll(v, &pos);
      check(pos == v.size(), "trailing characters");
      return r;
    } catch (const std::exception&) {
      throw ValidationError("config key " + key + ": expected integer, got '" + v + "'");
    }
  }

  static double parse_f64(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      double r = std::stod(v, &pos);
      check(pos == v.size(), "trailing characters");
      return r;
    } catch (const std::exception&) {
      throw ValidationError("config key " + key + ": expected number, got '" + v + "'");
    }
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace iderase
