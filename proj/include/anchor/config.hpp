#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace anchor {

/// Flat key=value configuration with [section] headers and '#' comments.
///
/// Every lookup of (section, key) first consults the environment variable
/// ANCHOR_<SECTION>_<KEY> (upper-cased, '.' and '-' mapped to '_'), so any
/// setting can be overridden without editing the file. Keys before the first
/// section header live in section "".
class Config {
 public:
  Config() = default;

  /// Throws Error(ConfigError) with the offending line number.
  static Config parse(std::string_view text, const std::string& source = "<string>");
  static Config load(const std::string& path);

  void set(const std::string& section, const std::string& key, std::string value);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> find(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& section, const std::string& key) const;
  std::int64_t get_int(const std::string& section, const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  /// Comma separated list, whitespace trimmed, empty items dropped.
  std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

  std::vector<std::string> sections() const;
  /// Sections named "<prefix>NAME"; returns the NAME parts in file order.
  std::vector<std::string> sections_with_prefix(std::string_view prefix) const;
  /// Keys in a section, file order.
  std::vector<std::string> keys(const std::string& section) const;

  const std::string& source() const noexcept { return source_; }

  static std::string env_name(const std::string& section, const std::string& key);

 private:
  struct Section {
    std::vector<std::string> order;
    std::map<std::string, std::string> values;
  };
  std::vector<std::string> section_order_;
  std::map<std::string, Section> sections_;
  std::string source_ = "<empty>";
};

}  // namespace anchor
