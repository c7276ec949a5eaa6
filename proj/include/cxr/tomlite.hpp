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
//
// tomlite: the slice of TOML that run configs actually use — [tables],
// bare/dotted keys, strings, integers, floats, booleans, and flat arrays.
// No date-times, no nested tables-in-arrays, no multi-line strings. Parse
// errors carry the line number and reject anything outside the slice, so a
// config either round-trips faithfully or fails loudly.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace cxr::toml {

using Value = std::variant<bool, std::int64_t, double, std::string,
                           std::vector<double>, std::vector<std::string>>;

/// Flat view of a parsed document: "[train] lr = 0.001" lands at "train.lr".
class Table {
 public:
  static Table parse(const std::string& text);
  static Table parse_file(const std::string& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, Value>& entries() const { return entries_; }

  /// Typed getters throw ValidationError when the key exists with another
  /// type; integer keys widen to double transparently.
  bool get_bool(const std::string& key, bool fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_strs(const std::string& key) const;

  void set(const std::string& key, Value v) { entries_[key] = std::move(v); }

 private:
  std::map<std::string, Value> entries_;
};

/// Serializes a flat key set back into sectioned TOML (keys sorted, dotted
/// prefixes become [tables]); the output reparses to the same entries.
std::string serialize(const Table& table);

}  // namespace cxr::toml
