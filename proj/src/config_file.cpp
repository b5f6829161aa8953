#include "vanet/config_file.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vanet/types.hpp"

namespace vanet {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string where(const std::string& origin, std::size_t line) {
  return origin + ":" + std::to_string(line) + ": ";
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const std::size_t hash = raw.find_first_of("#;");
    std::string line = trim(raw.substr(0, hash));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where(origin, line_no) + "unterminated section");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where(origin, line_no) + "empty section name");
      cfg.data_[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where(origin, line_no) + "expected key = value");
    if (section.empty()) throw ConfigError(where(origin, line_no) + "key outside any section");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError(where(origin, line_no) + "empty key");
    auto& sec = cfg.data_[section];
    if (sec.count(key)) throw ConfigError(where(origin, line_no) + "duplicate key '" + key + "'");
    sec.emplace(std::move(key), std::move(value));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  auto it = data_.find(section);
  return it != data_.end() && it->second.count(key) > 0;
}

std::optional<std::string> ConfigFile::get(const std::string& section,
                                           const std::string& key) const {
  auto it = data_.find(section);
  if (it == data_.end()) return std::nullopt;
  auto kt = it->second.find(key);
  if (kt == it->second.end()) return std::nullopt;
  return kt->second;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  return get(section, key).value_or(fallback);
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  double out = 0.0;
  const char* b = v->data();
  const char* e = b + v->size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e || !std::isfinite(out)) {
    throw ConfigError(origin_ + ": [" + section + "] " + key + ": not a number: '" + *v + "'");
  }
  return out;
}

std::int64_t ConfigFile::get_int(const std::string& section, const std::string& key,
                                 std::int64_t fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  std::int64_t out = 0;
  const char* b = v->data();
  const char* e = b + v->size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e) {
    throw ConfigError(origin_ + ": [" + section + "] " + key + ": not an integer: '" + *v + "'");
  }
  return out;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(origin_ + ": [" + section + "] " + key + ": not a boolean: '" + *v + "'");
}

void ConfigFile::set(const std::string& section, const std::string& key,
                     const std::string& value) {
  data_[section][key] = value;
}

void ConfigFile::check_keys(const std::map<std::string, std::set<std::string>>& allowed,
                            const std::set<std::string>& ignored) const {
  for (const auto& [name, sec] : data_) {
    if (ignored.count(name)) continue;
    auto it = allowed.find(name);
    if (it == allowed.end()) throw ConfigError(origin_ + ": unknown section [" + name + "]");
    for (const auto& [key, value] : sec) {
      if (!it->second.count(key)) {
        throw ConfigError(origin_ + ": unknown key '" + key + "' in [" + name + "]");
      }
    }
  }
}

std::string ConfigFile::dump() const {
  std::string out;
  bool first = true;
  for (const auto& [name, sec] : data_) {
    if (!first) out += "\n";
    first = false;
    out += "[" + name + "]\n";
    for (const auto& [key, value] : sec) out += key + " = " + value + "\n";
  }
  return out;
}

std::string format_number(double v) {
  if (v == 0.0) return "0";
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf.data(), p);
}

}  // namespace vanet
