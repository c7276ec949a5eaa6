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
// Model-driven evaluation: one deterministic inference pass over a dataset
// split collects the full (N, C) logit matrix, and every headline metric in
// the report (both losses, F1, AUC) is computed from that same matrix.
// Images are standardized but never augmented here, so repeated passes over
// the same split and checkpoint are bitwise identical.

#pragma once

#include <cstdint>
#include <string>

#include "cxr/dataset.hpp"
#include "cxr/losses.hpp"
#include "cxr/metrics.hpp"
#include "cxr/models.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

struct EvalPassOptions {
  /// Rows per forward pass. A memory/latency knob: each logit row is a
  /// function of its own image only, so changing the split perturbs nothing
  /// but floating-point summation order inside the matrix kernels (observed
  /// ~1e-9 on unit-scale logits). A fixed batch size reproduces bitwise.
  std::int64_t batch = 32;
  double threshold = 0.5;
  FocalParams focal;
};

/// Runs the model over every record of `split` in stored order (eval mode,
/// no gradients, no augmentation) and returns the (N, C) logit matrix.
/// Rejects an empty split, a vocabulary whose size differs from the model's
/// class count, and records without attached target vectors; image decode
/// failures are rethrown with the offending image id.
Tensor collect_logits(ClassifierModel& model, const DatasetSplit& split,
                      std::int64_t batch = 32);

/// The (N, C) target matrix in the same row order `collect_logits` uses.
Tensor stack_targets(const DatasetSplit& split);

/// collect_logits + stack_targets + evaluate_logits in one call. The report's
/// model name defaults to the architecture name when `model_name` is empty.
EvalReport evaluate_model(ClassifierModel& model, const DatasetSplit& split,
                          const EvalPassOptions& options = {},
                          const std::string& model_name = "");

}  // namespace cxr
