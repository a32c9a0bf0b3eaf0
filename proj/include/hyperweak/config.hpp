#pragma once

// Flat "key = value" configuration with [sections]. Every accepted key has a
// default; anything else is rejected with the offending line.

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "hyperweak/error.hpp"

namespace hyperweak {

struct ConfigEntry {
  std::string section, key, value, help;
  std::string origin = "default";  // "default", "<file>:<line>" or "command line"
};

class ConfigTable {
 public:
  ConfigTable() = default;
  explicit ConfigTable(std::vector<ConfigEntry> defaults) : entries_(std::move(defaults)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const bool fresh = index_.emplace(name(entries_[i].section, entries_[i].key), i).second;
      require(fresh, ErrorCode::Config, "duplicate schema key " + name(entries_[i].section, entries_[i].key));
      sections_.insert(entries_[i].section);
    }
  }

  void merge(std::istream& in, const std::string& source) {
    std::string line, section;
    std::set<std::string> seen;
    for (int ln = 1; std::getline(in, line); ++ln) {
      const std::string where = source + ":" + std::to_string(ln);
      auto fail = [&](const std::string& m) { throw Error(ErrorCode::Config, where + ": " + m); };
      const std::string s = strip(cut_comment(line));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']') fail("unterminated section header");
        section = strip(s.substr(1, s.size() - 2));
        if (!sections_.count(section)) fail("unknown section [" + section + "]");
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) fail("expected 'key = value'");
      const std::string key = strip(s.substr(0, eq)), value = strip(s.substr(eq + 1));
      if (key.empty()) fail("missing key");
      if (value.empty()) fail("missing value for '" + key + "'");
      if (section.empty()) fail("key '" + key + "' outside any section");
      const auto it = index_.find(name(section, key));
      if (it == index_.end()) fail("unknown key '" + key + "' in [" + section + "]");
      if (!seen.insert(it->first).second) fail("duplicate key '" + key + "'");
      entries_[it->second].value = value;
      entries_[it->second].origin = where;
    }
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    entry(section, key).value = value;
    entry(section, key).origin = "command line";
  }

  const std::string& str(const std::string& section, const std::string& key) const {
    return entry(section, key).value;
  }
  double real(const std::string& section, const std::string& key) const {
    return number<double>(section, key, "a number");
  }
  int integer(const std::string& section, const std::string& key) const {
    return number<int>(section, key, "an integer");
  }
  std::uint64_t u64(const std::string& section, const std::string& key) const {
    return number<std::uint64_t>(section, key, "an unsigned integer");
  }
  std::vector<std::string> list(const std::string& section, const std::string& key) const {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : str(section, key) + ",") {
      if (ch != ',') { cur += ch; continue; }
      cur = strip(cur);
      if (cur.empty()) bad(entry(section, key), "empty list item");
      out.push_back(cur);
      cur.clear();
    }
    return out;
  }
  // value must be one of the listed words
  const std::string& choice(const std::string& section, const std::string& key,
                            const std::vector<std::string>& allowed) const {
    const auto& e = entry(section, key);
    for (const auto& a : allowed)
      if (e.value == a) return e.value;
    std::string all;
    for (const auto& a : allowed) all += (all.empty() ? "" : "|") + a;
    bad(e, "expected one of " + all);
  }

  [[noreturn]] void bad(const ConfigEntry& e, const std::string& why) const {
    throw Error(ErrorCode::Config, e.origin + ": [" + e.section + "] " + e.key + " = " + e.value + ": " + why);
  }
  const ConfigEntry& entry(const std::string& section, const std::string& key) const {
    const auto it = index_.find(name(section, key));
    require(it != index_.end(), ErrorCode::Config, "no such key " + name(section, key));
    return entries_[it->second];
  }

  void print(std::ostream& os) const {
    std::string section;
    for (const auto& e : entries_) {
      if (e.section != section) {
        os << (section.empty() ? "" : "\n") << '[' << e.section << "]\n";
        section = e.section;
      }
      os << e.key << " = " << e.value;
      if (!e.help.empty()) os << "  # " << e.help;
      os << '\n';
    }
  }

 private:
  static std::string name(const std::string& s, const std::string& k) { return s + "." + k; }
  static std::string strip(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
  }
  static std::string cut_comment(const std::string& s) {
    for (std::size_t i = 0; i < s.size(); ++i)
      if ((s[i] == '#' || s[i] == ';') && (i == 0 || s[i - 1] == ' ' || s[i - 1] == '\t')) return s.substr(0, i);
    return s;
  }
  ConfigEntry& entry(const std::string& section, const std::string& key) {
    const auto it = index_.find(name(section, key));
    require(it != index_.end(), ErrorCode::Config, "no such key " + name(section, key));
    return entries_[it->second];
  }
  template <class T>
  T number(const std::string& section, const std::string& key, const char* what) const {
    const auto& e = entry(section, key);
    T v{};
    const char* b = e.value.data();
    const char* end = b + e.value.size();
    const auto r = std::from_chars(b, end, v);
    if (r.ec != std::errc() || r.ptr != end) bad(e, std::string("expected ") + what);
    return v;
  }

  std::vector<ConfigEntry> entries_;
  std::map<std::string, std::size_t> index_;
  std::set<std::string> sections_;
};

}  // namespace hyperweak
