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
// Multi-label evaluation: per-class and macro F1 at a fixed threshold, exact
// Mann-Whitney AUC with tie averaging, and a combined report carrying the two
// losses next to the ranking metrics. Inputs are (N, C) float tensors: one
// row per sample, one column per class.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/losses.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

struct F1Class {
  double f1 = 0.0;
  /// True when 2TP + FP + FN was zero and the 0-convention applied.
  bool zero_division = false;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
};

struct F1Result {
  double macro = 0.0;
  std::vector<F1Class> per_class;
};

struct AucClass {
  double auc = 0.0;
  /// False when the class has zero positive or zero negative support; such
  /// classes are excluded from the macro mean.
  bool defined = false;
  std::int64_t support_pos = 0;
  std::int64_t support_neg = 0;
};

struct AucResult {
  double macro = 0.0;
  std::vector<AucClass> per_class;
  std::int64_t degenerate_classes = 0;
};

/// Per class c: predict positive when probability >= threshold, then
/// F1 = 2TP / (2TP + FP + FN), defined as 0 on a zero denominator. The macro
/// value is the unweighted mean over all classes. Probabilities must lie in
/// [0, 1]; targets must be exactly 0 or 1; shapes must match (N, C).
F1Result f1_macro(const Tensor& probabilities, const Tensor& targets,
                  double threshold = 0.5);

/// Per class, the exact pair statistic (#concordant + 0.5 * #tied) / (P * N)
/// over all positive-negative score pairs, computed via tie-averaged rank
/// sums in O(n log n). Classes with one-sided support are flagged undefined
/// and excluded from the macro mean; all classes degenerate is an error.
AucResult auc_macro(const Tensor& scores, const Tensor& targets);

struct ClassReport {
  std::string name;
  double f1 = 0.0;
  bool f1_zero_division = false;
  double auc = 0.0;
  bool auc_defined = false;
  std::int64_t support_pos = 0;
  std::int64_t support_neg = 0;
};

struct EvalReport {
  std::string model_name;
  double bce_loss = 0.0;
  double focal_loss = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  double threshold = 0.5;
  std::int64_t n_samples = 0;
  std::vector<ClassReport> per_class;
};

struct EvalOptions {
  double threshold = 0.5;
  FocalParams focal;
};

/// Builds the full report from one collected pass: BCE and focal losses from
/// the raw logits, F1 and AUC from sigmoid(logits). `logits` and `targets`
/// are (N, C) with C == vocabulary size.
EvalReport evaluate_logits(const std::string& model_name, const Tensor& logits,
                           const Tensor& targets, const LabelVocabulary& vocab,
                           const EvalOptions& options = {});

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void save_report_json(const EvalReport& report, const std::string& path);
EvalReport load_report_json(const std::string& path);

/// Aligned text table, one row per report:
/// Model | BCE Loss | F Loss | F1-Score | AUC
std::string render_metrics_table(const std::vector<EvalReport>& reports);

/// Per-class breakdown of a single report (class, F1, AUC, supports).
std::string render_per_class_table(const EvalReport& report);

}  // namespace cxr
