#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "ethnocode/error.hpp"
#include "ethnocode/util.hpp"

namespace ethnocode {

namespace detail {

inline std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

inline nlohmann::json parse_config_value(std::string_view v, std::size_t line_no) {
  auto fail = [&](const std::string& why) {
    return Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": " + why);
  };
  v = util::trim(v);
  if (v.empty()) throw fail("missing value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') throw fail("unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        const char c = v[++i];
        out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
      } else {
        out += v[i];
      }
    }
    return out;
  }
  if (v.front() == '[') {
    if (v.back() != ']') throw fail("unterminated array");
    nlohmann::json arr = nlohmann::json::array();
    auto body = v.substr(1, v.size() - 2);
    std::size_t start = 0;
    bool in_string = false;
    for (std::size_t i = 0; i <= body.size(); ++i) {
      if (i < body.size() && body[i] == '"' && (i == 0 || body[i - 1] != '\\')) in_string = !in_string;
      if (i == body.size() || (body[i] == ',' && !in_string)) {
        auto item = util::trim(body.substr(start, i - start));
        if (!item.empty()) arr.push_back(parse_config_value(item, line_no));
        start = i + 1;
      }
    }
    return arr;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  if (auto i = util::parse_int(v)) return *i;
  if (auto d = util::parse_double(v)) return *d;
  throw fail("cannot read value \"" + std::string(v) + "\"");
}

}  // namespace detail

/// Reads the TOML subset used by pipeline configs: [section] headers,
/// key = value lines, strings, integers, floats, booleans, one-line arrays
/// and # comments. Returns {section: {key: value}}; keys before the first
/// header land at the top level.
inline nlohmann::json parse_config(std::string_view text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* section = &root;
  std::size_t line_no = 0;
  for (const auto& raw : util::split(util::normalize_newlines(text), "\n")) {
    ++line_no;
    auto line = util::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": bad header");
      const std::string name(util::trim(line.substr(1, line.size() - 2)));
      if (name.empty()) throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": empty section");
      if (root.contains(name))
        throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": duplicate section " + name);
      root[name] = nlohmann::json::object();
      section = &root[name];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
    std::string key(util::trim(line.substr(0, eq)));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
    if (key.empty()) throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": empty key");
    if (section->contains(key))
      throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": duplicate key " + key);
    (*section)[key] = detail::parse_config_value(line.substr(eq + 1), line_no);
  }
  return root;
}

}  // namespace ethnocode
