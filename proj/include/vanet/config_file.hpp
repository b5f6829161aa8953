#pragma once

// Line-oriented `[section]` / `key = value` configuration files.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace vanet {

class ConfigFile {
 public:
  using Section = std::map<std::string, std::string>;

  /// Parses text. `#` and `;` start comments. Throws ConfigError with line info.
  static ConfigFile parse(std::string_view text, const std::string& origin = "<string>");
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

  /// Throws ConfigError on any section or key outside `allowed`. Sections in
  /// `ignored` are skipped entirely.
  void check_keys(const std::map<std::string, std::set<std::string>>& allowed,
                  const std::set<std::string>& ignored = {}) const;

  /// Canonical text form; sections and keys in sorted order.
  std::string dump() const;

  const std::map<std::string, Section>& sections() const { return data_; }

 private:
  std::map<std::string, Section> data_;
  std::string origin_;
};

/// Shortest round-trip decimal form of a double.
std::string format_number(double v);

}  // namespace vanet
