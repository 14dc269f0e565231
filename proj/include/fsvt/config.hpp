#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fsvt/tensor.hpp"

namespace fsvt {

// UTF-8 "key=value" lines; '#' starts a comment line. Keys are kept sorted so
// the text form is canonical.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text) {
    KeyValues kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      require(eq != std::string::npos, "invalid_config", "line " + std::to_string(lineno) + ": expected key=value");
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("missing_file", "cannot open config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
  }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, const char* value) { values_[key] = value; }
  void set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }
  template <class N>
  void set(const std::string& key, N value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    values_[key] = os.str();
  }
  void set(const std::string& key, const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    values_[key] = s;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  std::string get(const std::string& key, const char* fallback) const { return get(key, std::string(fallback)); }
  bool get(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = values_.at(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error("invalid_config", key + ": expected true/false, got '" + v + "'");
  }
  template <class N>
  N get(const std::string& key, N fallback) const {
    if (!has(key)) return fallback;
    return number<N>(key, values_.at(key));
  }
  std::vector<int> get(const std::string& key, const std::vector<int>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<int> out;
    std::istringstream is(values_.at(key));
    std::string item;
    while (std::getline(is, item, ',')) out.push_back(number<int>(key, trim(item)));
    return out;
  }

  const std::map<std::string, std::string>& items() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  template <class N>
  static N number(const std::string& key, const std::string& v) {
    N out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    require(res.ec == std::errc() && res.ptr == v.data() + v.size(), "invalid_config",
            key + ": cannot parse '" + v + "' as a number");
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace fsvt
