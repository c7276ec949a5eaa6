// Copyright 2026 The cxr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cxr/tomlite.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cxr/common.hpp"

namespace cxr::toml {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw ValidationError(fmt::format("config line {}: {}", line, what));
}

bool is_bare_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
         c == '.';
}

struct Cursor {
  const std::string& s;
  std::size_t i = 0;
  int line;

  bool done() const { return i >= s.size(); }
  char peek() const { return s[i]; }
  void skip_ws() {
    while (!done() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
};

std::string parse_basic_string(Cursor& c) {
  ++c.i;  // opening quote
  std::string out;
  while (true) {
    if (c.done()) fail(c.line, "unterminated string");
    const char ch = c.s[c.i++];
    if (ch == '"') return out;
    if (ch != '\\') {
      out.push_back(ch);
      continue;
    }
    if (c.done()) fail(c.line, "dangling escape");
    const char esc = c.s[c.i++];
    switch (esc) {
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      default: fail(c.line, fmt::format("unsupported escape '\\{}'", esc));
    }
  }
}

// Scalar token: ends at whitespace, ',', ']', or '#'.
std::string scalar_token(Cursor& c) {
  std::string t;
  while (!c.done()) {
    const char ch = c.peek();
    if (ch == ' ' || ch == '\t' || ch == ',' || ch == ']' || ch == '#') break;
    t.push_back(ch);
    ++c.i;
  }
  if (t.empty()) fail(c.line, "expected a value");
  return t;
}

Value parse_scalar_token(const std::string& t, int line) {
  if (t == "true") return true;
  if (t == "false") return false;
  // Integer first; anything with '.', 'e', "inf", or "nan" is a float.
  const bool floaty = t.find_first_of(".eE") != std::string::npos ||
                      t.find("inf") != std::string::npos ||
                      t.find("nan") != std::string::npos;
  if (!floaty) {
    std::int64_t iv = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), iv);
    if (ec == std::errc() && p == t.data() + t.size()) return iv;
  }
  try {
    std::size_t used = 0;
    const double dv = std::stod(t, &used);
    if (used == t.size()) return dv;
  } catch (const std::exception&) {
  }
  fail(line, fmt::format("cannot parse value '{}'", t));
}

Value parse_array(Cursor& c) {
  ++c.i;  // '['
  std::vector<double> nums;
  std::vector<std::string> strs;
  bool any = false, is_str = false;
  while (true) {
    c.skip_ws();
    if (c.done()) fail(c.line, "unterminated array");
    if (c.peek() == ']') {
      ++c.i;
      break;
    }
    if (c.peek() == ',') {
      ++c.i;
      continue;
    }
    if (c.peek() == '"') {
      if (any && !is_str) fail(c.line, "mixed array types");
      is_str = true;
      any = true;
      strs.push_back(parse_basic_string(c));
    } else {
      if (any && is_str) fail(c.line, "mixed array types");
      any = true;
      const Value v = parse_scalar_token(scalar_token(c), c.line);
      if (std::holds_alternative<bool>(v)) fail(c.line, "boolean arrays are not supported");
      nums.push_back(std::holds_alternative<std::int64_t>(v)
                         ? static_cast<double>(std::get<std::int64_t>(v))
                         : std::get<double>(v));
    }
  }
  if (is_str) return strs;
  return nums;
}

}  // namespace

Table Table::parse(const std::string& text) {
  Table out;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    Cursor c{raw, 0, line};
    c.skip_ws();
    if (c.done() || c.peek() == '#') continue;

    if (c.peek() == '[') {
      const auto close = raw.find(']', c.i);
      if (close == std::string::npos) fail(line, "unterminated [section]");
      section = raw.substr(c.i + 1, close - c.i - 1);
      if (section.empty()) fail(line, "empty [section] name");
      for (const char ch : section)
        if (!is_bare_char(ch)) fail(line, fmt::format("bad section name '{}'", section));
      c.i = close + 1;
      c.skip_ws();
      if (!c.done() && c.peek() != '#') fail(line, "trailing text after [section]");
      continue;
    }

    std::string key;
    while (!c.done() && is_bare_char(c.peek())) {
      key.push_back(c.peek());
      ++c.i;
    }
    if (key.empty()) fail(line, "expected a key");
    c.skip_ws();
    if (c.done() || c.peek() != '=') fail(line, fmt::format("expected '=' after '{}'", key));
    ++c.i;
    c.skip_ws();
    if (c.done()) fail(line, fmt::format("missing value for '{}'", key));

    Value v;
    if (c.peek() == '"') {
      v = parse_basic_string(c);
    } else if (c.peek() == '[') {
      v = parse_array(c);
    } else {
      v = parse_scalar_token(scalar_token(c), line);
    }
    c.skip_ws();
    if (!c.done() && c.peek() != '#') fail(line, fmt::format("trailing text after value of '{}'", key));

    const std::string full = section.empty() ? key : section + "." + key;
    if (out.entries_.count(full)) fail(line, fmt::format("duplicate key '{}'", full));
    out.entries_.emplace(full, std::move(v));
  }
  return out;
}

Table Table::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError(fmt::format("cannot open config file: {}", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

namespace {

[[noreturn]] void type_fail(const std::string& key, const char* want) {
  throw ValidationError(fmt::format("config key '{}' is not a {}", key, want));
}

}  // namespace

bool Table::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (const auto* v = std::get_if<bool>(&it->second)) return *v;
  type_fail(key, "boolean");
}

std::int64_t Table::get_int(const std::string& key, std::int64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (const auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
  type_fail(key, "integer");
}

double Table::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (const auto* v = std::get_if<double>(&it->second)) return *v;
  if (const auto* v = std::get_if<std::int64_t>(&it->second))
    return static_cast<double>(*v);
  type_fail(key, "number");
}

std::string Table::get_str(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (const auto* v = std::get_if<std::string>(&it->second)) return *v;
  type_fail(key, "string");
}

std::vector<double> Table::get_doubles(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return {};
  if (const auto* v = std::get_if<std::vector<double>>(&it->second)) return *v;
  type_fail(key, "number array");
}

std::vector<std::string> Table::get_strs(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return {};
  if (const auto* v = std::get_if<std::vector<std::string>>(&it->second)) return *v;
  type_fail(key, "string array");
}

namespace {

std::string escape(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out + "\"";
}

std::string value_str(const Value& v) {
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  if (const auto* i = std::get_if<std::int64_t>(&v)) return fmt::format("{}", *i);
  if (const auto* d = std::get_if<double>(&v)) {
    // Keep floats recognizable as floats on the round trip.
    std::string s = fmt::format("{}", *d);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
  }
  if (const auto* s = std::get_if<std::string>(&v)) return escape(*s);
  if (const auto* a = std::get_if<std::vector<double>>(&v)) {
    std::string out = "[";
    for (std::size_t i = 0; i < a->size(); ++i)
      out += (i ? ", " : "") + value_str(Value((*a)[i]));
    return out + "]";
  }
  const auto& a = std::get<std::vector<std::string>>(v);
  std::string out = "[";
  for (std::size_t i = 0; i < a.size(); ++i) out += (i ? ", " : "") + escape(a[i]);
  return out + "]";
}

}  // namespace

std::string serialize(const Table& table) {
  // Bare keys first (they must precede any [section]), then dotted keys,
  // which std::map ordering already groups by prefix.
  std::string out;
  for (const auto& [key, value] : table.entries())
    if (key.find('.') == std::string::npos)
      out += key + " = " + value_str(value) + "\n";
  std::string section;
  for (const auto& [key, value] : table.entries()) {
    const auto dot = key.rfind('.');
    if (dot == std::string::npos) continue;
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + value_str(value) + "\n";
  }
  return out;
}

}  // namespace cxr::toml
