#include "anchor/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "anchor/error.hpp"

namespace anchor {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!key_char(c)) return false;
  }
  return true;
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& source) {
  Config cfg;
  cfg.source_ = source;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    auto fail = [&](const std::string& why) -> Error {
      return Error(Errc::ConfigError, source + ":" + std::to_string(line_no) + ": " + why);
    };

    if (line.front() == '[') {
      if (line.back() != ']') throw fail("unterminated section header");
      const auto name = trim(line.substr(1, line.size() - 2));
      if (!valid_name(name)) throw fail("bad section name '" + std::string(name) + "'");
      section = std::string(name);
      if (!cfg.sections_.count(section)) cfg.section_order_.push_back(section);
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw fail("expected key = value");
    const auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (!valid_name(key)) throw fail("bad key '" + std::string(key) + "'");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (cfg.sections_[section].values.count(std::string(key))) {
      throw fail("duplicate key '" + std::string(key) + "'");
    }
    cfg.set(section, std::string(key), std::string(value));
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void Config::set(const std::string& section, const std::string& key, std::string value) {
  if (!sections_.count(section)) section_order_.push_back(section);
  auto& s = sections_[section];
  if (!s.values.count(key)) s.order.push_back(key);
  s.values[key] = std::move(value);
}

std::string Config::env_name(const std::string& section, const std::string& key) {
  std::string name = "ANCHOR_";
  auto add = [&](const std::string& part) {
    for (char c : part) {
      name += (c == '.' || c == '-') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
  };
  if (!section.empty()) {
    add(section);
    name += '_';
  }
  add(key);
  return name;
}

std::optional<std::string> Config::find(const std::string& section, const std::string& key) const {
  if (const char* env = std::getenv(env_name(section, key).c_str())) return std::string(env);
  auto it = sections_.find(section);
  if (it == sections_.end()) return std::nullopt;
  auto kv = it->second.values.find(key);
  if (kv == it->second.values.end()) return std::nullopt;
  return kv->second;
}

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key).has_value(); }

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& fallback) const {
  return find(section, key).value_or(fallback);
}

std::string Config::require_string(const std::string& section, const std::string& key) const {
  auto v = find(section, key);
  if (!v || v->empty()) throw Error(Errc::ConfigError, source_ + ": missing [" + section + "] " + key);
  return *v;
}

std::int64_t Config::get_int(const std::string& section, const std::string& key, std::int64_t fallback) const {
  auto v = find(section, key);
  if (!v) return fallback;
  std::int64_t out = 0;
  const auto* end = v->data() + v->size();
  auto [p, ec] = std::from_chars(v->data(), end, out);
  if (ec != std::errc{} || p != end) {
    throw Error(Errc::ConfigError, source_ + ": [" + section + "] " + key + " expects an integer, got '" + *v + "'");
  }
  return out;
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
  auto v = find(section, key);
  if (!v) return fallback;
  char* end = nullptr;
  const double out = std::strtod(v->c_str(), &end);
  if (v->empty() || end != v->c_str() + v->size()) {
    throw Error(Errc::ConfigError, source_ + ": [" + section + "] " + key + " expects a number, got '" + *v + "'");
  }
  return out;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  auto v = find(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw Error(Errc::ConfigError, source_ + ": [" + section + "] " + key + " expects a boolean, got '" + *v + "'");
}

std::vector<std::string> Config::get_list(const std::string& section, const std::string& key) const {
  std::vector<std::string> out;
  auto v = find(section, key);
  if (!v) return out;
  std::string_view rest = *v;
  while (true) {
    const auto comma = rest.find(',');
    const auto item = trim(rest.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::vector<std::string> Config::sections() const { return section_order_; }

std::vector<std::string> Config::sections_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& s : section_order_) {
    if (s.size() > prefix.size() && s.compare(0, prefix.size(), prefix) == 0) out.push_back(s.substr(prefix.size()));
  }
  return out;
}

std::vector<std::string> Config::keys(const std::string& section) const {
  auto it = sections_.find(section);
  if (it == sections_.end()) return {};
  return it->second.order;
}

}  // namespace anchor
