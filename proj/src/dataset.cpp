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

#include "cxr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>

#include <fmt/format.h>
#include "json.hpp"

#include "cxr/common.hpp"
#include "cxr/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cxr {

namespace {

constexpr const char* kNoFinding = "No Finding";

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

/// Levenshtein distance for "did you mean" suggestions.
std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

/// RFC-4180-ish CSV row split: quoted fields, "" escapes, embedded commas.
std::vector<std::string> split_csv_row(const std::string& line, int lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (quoted)
    throw ValidationError(fmt::format("manifest line {}: unterminated quote", lineno));
  out.push_back(cur);
  return out;
}

std::vector<std::string> split_labels(const std::string& field) {
  std::vector<std::string> out;
  std::string cur;
  std::unordered_set<std::string> seen;
  auto flush = [&] {
    const std::string lab = trim(cur);
    cur.clear();
    if (lab.empty() || lab == kNoFinding) return;
    if (seen.insert(lab).second) out.push_back(lab);
  };
  for (const char c : field) {
    if (c == '|') {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

std::vector<std::string> read_id_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError(fmt::format("cannot open split list: {}", path));
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const std::string id = trim(line);
    if (!id.empty() && id[0] != '#') ids.push_back(id);
  }
  return ids;
}

}  // namespace

// ---- LabelVocabulary ---------------------------------------------------------

LabelVocabulary::LabelVocabulary(std::vector<std::string> classes)
    : classes_(std::move(classes)) {
  if (classes_.empty()) throw ValidationError("vocabulary has no classes");
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& name = classes_[i];
    if (name.empty()) throw ValidationError("vocabulary contains an empty class name");
    if (name == kNoFinding)
      throw ValidationError("'No Finding' is the empty-label sentinel, not a class");
    if (!index_.emplace(name, static_cast<int>(i)).second)
      throw ValidationError(fmt::format("duplicate class '{}' in vocabulary", name));
  }
}

LabelVocabulary LabelVocabulary::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError(fmt::format("cannot open vocabulary file: {}", path));
  std::vector<std::string> classes;
  std::string line;
  while (std::getline(in, line)) {
    const std::string name = trim(line);
    if (!name.empty() && name[0] != '#') classes.push_back(name);
  }
  return LabelVocabulary(std::move(classes));
}

int LabelVocabulary::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

int LabelVocabulary::index_of(const std::string& name) const {
  const int at = find(name);
  if (at >= 0) return at;
  std::size_t best = SIZE_MAX;
  std::string nearest;
  for (const auto& c : classes_) {
    const auto d = edit_distance(name, c);
    if (d < best) {
      best = d;
      nearest = c;
    }
  }
  throw ValidationError(fmt::format("unknown label '{}' (nearest vocabulary entry: '{}')",
                                    name, nearest));
}

// ---- Manifest parsing -----------------------------------------------------------

std::vector<SampleRecord> parse_label_manifest(const std::string& manifest_path,
                                               const std::string& image_root,
                                               IngestReport* report) {
  std::ifstream in(manifest_path);
  if (!in) throw FileError(fmt::format("cannot open manifest: {}", manifest_path));

  std::string line;
  if (!std::getline(in, line))
    throw ValidationError(fmt::format("manifest is empty: {}", manifest_path));
  const auto header = split_csv_row(line, 1);
  int id_col = -1, labels_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = trim(header[i]);
    if (name == "Image Index") id_col = static_cast<int>(i);
    if (name == "Finding Labels") labels_col = static_cast<int>(i);
  }
  if (id_col < 0)
    throw ValidationError("manifest is missing required column \"Image Index\"");
  if (labels_col < 0)
    throw ValidationError("manifest is missing required column \"Finding Labels\"");

  std::vector<SampleRecord> records;
  int lineno = 1;
  const fs::path root(image_root);
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_row(line, lineno);
    const auto need = static_cast<std::size_t>(std::max(id_col, labels_col));
    if (cells.size() <= need)
      throw ValidationError(fmt::format(
          "manifest line {}: {} columns, need at least {}", lineno, cells.size(), need + 1));
    SampleRecord rec;
    rec.image_id = trim(cells[static_cast<std::size_t>(id_col)]);
    if (rec.image_id.empty())
      throw ValidationError(fmt::format("manifest line {}: empty \"Image Index\"", lineno));
    rec.path = (root / rec.image_id).string();
    rec.labels = split_labels(cells[static_cast<std::size_t>(labels_col)]);
    if (report && !fs::exists(rec.path)) report->missing_files.push_back(rec.image_id);
    records.push_back(std::move(rec));
  }
  return records;
}

// ---- One-hot ---------------------------------------------------------------------

std::vector<float> encode_one_hot(const std::vector<std::string>& labels,
                                  const LabelVocabulary& vocab) {
  std::vector<float> target(vocab.size(), 0.0f);
  for (const auto& lab : labels)
    target[static_cast<std::size_t>(vocab.index_of(lab))] = 1.0f;
  return target;
}

std::vector<std::string> decode_one_hot(const std::vector<float>& target,
                                        const LabelVocabulary& vocab) {
  if (target.size() != vocab.size())
    throw ValidationError(fmt::format("target length {} does not match vocabulary size {}",
                                      target.size(), vocab.size()));
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 1.0f) {
      labels.push_back(vocab.classes()[i]);
    } else if (target[i] != 0.0f) {
      throw ValidationError(fmt::format("target[{}] = {} is not a 0/1 indicator",
                                        i, target[i]));
    }
  }
  return labels;
}

void attach_targets(std::vector<SampleRecord>& records, const LabelVocabulary& vocab) {
  for (auto& rec : records) {
    try {
      rec.target = encode_one_hot(rec.labels, vocab);
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("record '{}': {}", rec.image_id, e.what()));
    }
  }
}

// ---- Splits ----------------------------------------------------------------------

std::pair<DatasetSplit, DatasetSplit> build_splits(
    const std::vector<SampleRecord>& records, const LabelVocabulary& vocab,
    const std::string& train_list_path, const std::string& test_list_path,
    IngestReport* report) {
  const auto train_ids_v = read_id_list(train_list_path);
  const auto test_ids_v = read_id_list(test_list_path);
  const std::unordered_set<std::string> train_ids(train_ids_v.begin(), train_ids_v.end());
  const std::unordered_set<std::string> test_ids(test_ids_v.begin(), test_ids_v.end());
  for (const auto& id : train_ids)
    if (test_ids.count(id))
      throw ValidationError(fmt::format(
          "image id '{}' appears in both split lists; splits must be disjoint", id));

  DatasetSplit train{.name = "train", .source_list = train_list_path, .vocab = vocab, .records = {}};
  DatasetSplit test{.name = "test", .source_list = test_list_path, .vocab = vocab, .records = {}};
  std::unordered_set<std::string> seen;
  for (const auto& rec : records) {
    seen.insert(rec.image_id);
    if (train_ids.count(rec.image_id)) {
      train.records.push_back(rec);
    } else if (test_ids.count(rec.image_id)) {
      test.records.push_back(rec);
    } else if (report) {
      ++report->records_in_no_list;
    }
  }
  if (report) {
    for (const auto& id : train_ids_v)
      if (!seen.count(id)) ++report->list_ids_without_row;
    for (const auto& id : test_ids_v)
      if (!seen.count(id)) ++report->list_ids_without_row;
  }
  attach_targets(train.records, vocab);
  attach_targets(test.records, vocab);
  return {std::move(train), std::move(test)};
}

DatasetSplit make_subset(const DatasetSplit& split, double fraction,
                         std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ValidationError(fmt::format("subset fraction must be in (0, 1], got {}", fraction));
  const auto n = static_cast<std::int64_t>(split.records.size());
  const auto want = static_cast<std::int64_t>(std::llround(fraction * static_cast<double>(n)));
  if (want < 1)
    throw ValidationError(fmt::format(
        "subset of {} records at fraction {} would be empty", n, fraction));
  DatasetSplit out{.name = split.name, .source_list = split.source_list,
                   .vocab = split.vocab, .records = {}};
  if (want >= n) {
    out.records = split.records;
    return out;
  }

  // Deterministic shuffled visit order.
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(mix_seed({seed, 0x50b5e7ull, static_cast<std::uint64_t>(n)}));
  shuffle(order, rng);

  const auto parent_pos = positive_counts(split);
  const auto threshold = static_cast<std::int64_t>(std::ceil(1.0 / fraction));
  const auto c = static_cast<std::int64_t>(split.vocab.size());

  // Coverage pass, rarest class first: every class with >= ceil(1/fraction)
  // parent positives gets one positive seat before general fill.
  std::vector<std::int64_t> class_order;
  for (std::int64_t k = 0; k < c; ++k)
    if (parent_pos[static_cast<std::size_t>(k)] >= threshold) class_order.push_back(k);
  std::sort(class_order.begin(), class_order.end(), [&](std::int64_t a, std::int64_t b) {
    const auto pa = parent_pos[static_cast<std::size_t>(a)];
    const auto pb = parent_pos[static_cast<std::size_t>(b)];
    return pa != pb ? pa < pb : a < b;
  });

  std::vector<char> picked(static_cast<std::size_t>(n), 0);
  std::vector<char> covered(static_cast<std::size_t>(c), 0);
  std::int64_t taken = 0;
  auto take = [&](std::int64_t idx) {
    picked[static_cast<std::size_t>(idx)] = 1;
    ++taken;
    const auto& t = split.records[static_cast<std::size_t>(idx)].target;
    for (std::int64_t k = 0; k < c; ++k)
      if (t[static_cast<std::size_t>(k)] == 1.0f) covered[static_cast<std::size_t>(k)] = 1;
  };
  for (const auto k : class_order) {
    if (taken >= want) break;
    if (covered[static_cast<std::size_t>(k)]) continue;
    for (const auto idx : order) {
      if (picked[static_cast<std::size_t>(idx)]) continue;
      if (split.records[static_cast<std::size_t>(idx)].target[static_cast<std::size_t>(k)] == 1.0f) {
        take(idx);
        break;
      }
    }
  }
  for (const auto idx : order) {
    if (taken >= want) break;
    if (!picked[static_cast<std::size_t>(idx)]) take(idx);
  }

  for (std::int64_t i = 0; i < n; ++i)
    if (picked[static_cast<std::size_t>(i)])
      out.records.push_back(split.records[static_cast<std::size_t>(i)]);
  return out;
}

// ---- JSON hand-off -----------------------------------------------------------------

void save_split_json(const DatasetSplit& split, const std::string& path) {
  json j;
  j["name"] = split.name;
  j["source_list"] = split.source_list;
  j["vocabulary"] = split.vocab.classes();
  j["records"] = json::array();
  for (const auto& rec : split.records) {
    json r;
    r["image_id"] = rec.image_id;
    r["path"] = rec.path;
    r["labels"] = rec.labels;
    std::vector<int> target(rec.target.size());
    for (std::size_t i = 0; i < rec.target.size(); ++i)
      target[i] = rec.target[i] != 0.0f ? 1 : 0;
    r["target"] = target;
    j["records"].push_back(std::move(r));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError(fmt::format("cannot write split manifest: {}", path));
  out << j.dump(1, '\t') << "\n";
  if (!out) throw FileError(fmt::format("failed writing split manifest: {}", path));
}

DatasetSplit load_split_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError(fmt::format("cannot open split manifest: {}", path));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("split manifest {} is not valid JSON: {}",
                                      path, e.what()));
  }
  try {
    DatasetSplit split;
    split.name = j.at("name").get<std::string>();
    split.source_list = j.value("source_list", std::string{});
    split.vocab = LabelVocabulary(j.at("vocabulary").get<std::vector<std::string>>());
    for (const auto& r : j.at("records")) {
      SampleRecord rec;
      rec.image_id = r.at("image_id").get<std::string>();
      rec.path = r.at("path").get<std::string>();
      rec.labels = r.at("labels").get<std::vector<std::string>>();
      const auto target = r.at("target").get<std::vector<int>>();
      rec.target.assign(target.begin(), target.end());
      // Integrity: stored target must agree with stored labels.
      if (rec.target != encode_one_hot(rec.labels, split.vocab))
        throw ValidationError(fmt::format(
            "record '{}': stored target disagrees with its labels", rec.image_id));
      split.records.push_back(std::move(rec));
    }
    return split;
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("split manifest {} has a bad schema: {}",
                                      path, e.what()));
  }
}

// ---- Reporting ----------------------------------------------------------------------

std::vector<std::int64_t> positive_counts(const DatasetSplit& split) {
  std::vector<std::int64_t> counts(split.vocab.size(), 0);
  for (const auto& rec : split.records)
    for (std::size_t k = 0; k < counts.size() && k < rec.target.size(); ++k)
      counts[k] += rec.target[k] == 1.0f ? 1 : 0;
  return counts;
}

std::string class_frequency_table(const DatasetSplit& split) {
  const auto counts = positive_counts(split);
  std::size_t width = 5;
  for (const auto& c : split.vocab.classes()) width = std::max(width, c.size());
  const auto n = static_cast<double>(std::max<std::size_t>(split.records.size(), 1));
  std::string out = fmt::format("{:<{}} | {:>9} | {:>8}\n", "class", width,
                                "positives", "fraction");
  out += std::string(width, '-') + "-+-----------+---------\n";
  for (std::size_t k = 0; k < counts.size(); ++k)
    out += fmt::format("{:<{}} | {:>9} | {:>8.4f}\n", split.vocab.classes()[k],
                       width, counts[k], static_cast<double>(counts[k]) / n);
  return out;
}

}  // namespace cxr
