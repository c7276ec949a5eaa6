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
// Annotation ingestion: CSV manifest -> labeled records -> list-file splits
// -> normalized JSON manifests. The label vocabulary is data, not code; the
// repo ships the standard 14-class thoracic list in configs/ and any file
// with one class per line works.

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cxr {

/// Ordered, unique class names. "No Finding" is a manifest sentinel meaning
/// "no positive labels" and is never itself a class.
class LabelVocabulary {
 public:
  LabelVocabulary() = default;
  explicit LabelVocabulary(std::vector<std::string> classes);

  /// One class name per line; blank lines and '#' comments skipped.
  static LabelVocabulary from_file(const std::string& path);

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t size() const { return classes_.size(); }

  /// Zero-based position, or -1 when absent.
  int find(const std::string& name) const;

  /// Position of a known class; throws ValidationError naming the label and
  /// the nearest vocabulary entry when unknown.
  int index_of(const std::string& name) const;

  bool operator==(const LabelVocabulary& o) const { return classes_ == o.classes_; }

 private:
  std::vector<std::string> classes_;
  std::unordered_map<std::string, int> index_;
};

struct SampleRecord {
  std::string image_id;                // manifest filename, the join key
  std::string path;                    // image_root / image_id
  std::vector<std::string> labels;     // deduplicated, manifest order
  std::vector<float> target;           // one-hot over the vocabulary
};

struct DatasetSplit {
  std::string name;                    // "train", "test", ...
  std::string source_list;             // split-list file this was built from
  LabelVocabulary vocab;
  std::vector<SampleRecord> records;
};

/// Non-fatal findings collected during ingestion.
struct IngestReport {
  std::vector<std::string> missing_files;  // manifest rows without a file on disk
  std::int64_t records_in_no_list = 0;     // rows matched by neither split list
  std::int64_t list_ids_without_row = 0;   // listed ids absent from the manifest
};

/// Parses a CSV with at least "Image Index" and "Finding Labels" columns.
/// "Finding Labels" is pipe-delimited; the "No Finding" sentinel yields an
/// empty label set. Targets are not attached yet (no vocabulary here).
/// Rows whose image file is absent are kept and reported.
std::vector<SampleRecord> parse_label_manifest(const std::string& manifest_path,
                                               const std::string& image_root,
                                               IngestReport* report = nullptr);

/// One-hot encode a label set. Unknown labels are an error naming the label
/// and its nearest vocabulary entry.
std::vector<float> encode_one_hot(const std::vector<std::string>& labels,
                                  const LabelVocabulary& vocab);

/// Inverse of encode_one_hot; entries must be exactly 0 or 1.
std::vector<std::string> decode_one_hot(const std::vector<float>& target,
                                        const LabelVocabulary& vocab);

/// Fills record.target for every record.
void attach_targets(std::vector<SampleRecord>& records, const LabelVocabulary& vocab);

/// Partitions records by two newline-delimited id lists. An id in both lists
/// is a hard error; rows in neither are dropped with a report count.
std::pair<DatasetSplit, DatasetSplit> build_splits(
    const std::vector<SampleRecord>& records, const LabelVocabulary& vocab,
    const std::string& train_list_path, const std::string& test_list_path,
    IngestReport* report = nullptr);

/// Deterministic stratified subset: size = round(fraction * N), and every
/// class with at least ceil(1/fraction) positives in the parent keeps at
/// least one positive. Record order follows the parent.
DatasetSplit make_subset(const DatasetSplit& split, double fraction,
                         std::uint64_t seed);

/// Normalized JSON manifest: {name, source_list, vocabulary, records}.
/// The canonical hand-off format between the prepare step and everything else.
void save_split_json(const DatasetSplit& split, const std::string& path);
DatasetSplit load_split_json(const std::string& path);

/// Positives per class, vocabulary order.
std::vector<std::int64_t> positive_counts(const DatasetSplit& split);

/// Aligned "class | positives | fraction" text block for logs and reports.
std::string class_frequency_table(const DatasetSplit& split);

}  // namespace cxr
