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
// Synthetic pattern datasets in the exact on-disk layout the ingest step
// expects: grayscale PNGs, a labels CSV, split lists and a vocabulary file.
// Labels are visual patterns (bands, checkerboard), so a small network can
// genuinely learn them — which is what the desk-scale training experiments
// and the end-to-end demo need.

#pragma once

#include <cstdint>
#include <string>

namespace cxr {

struct FixtureSpec {
  std::string dir;          // created if absent; contents overwritten
  int n_train = 40;
  int n_test = 10;
  std::int64_t image_size = 96;
  std::uint64_t seed = 0;
  /// Chance a sample carries a second pattern on top of its first.
  double second_label_prob = 0.2;
  /// Chance a sample is pattern-free (the "No Finding" row in the CSV).
  double clean_prob = 0.1;

  void validate() const;
};

struct FixturePaths {
  std::string image_root;  // directory holding the PNGs
  std::string manifest;    // labels.csv
  std::string train_list;  // train_list.txt
  std::string test_list;   // test_list.txt
  std::string vocab_file;  // classes.txt (one pattern name per line)
};

/// Three pattern classes: HorizontalBands, VerticalBands, Checkerboard.
/// Fully deterministic for a given spec (images, labels and list membership).
FixturePaths make_fixture(const FixtureSpec& spec);

}  // namespace cxr
