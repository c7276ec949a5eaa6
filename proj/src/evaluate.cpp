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

#include "cxr/evaluate.hpp"

#include <algorithm>
#include <cstring>

#include <fmt/format.h>

#include "cxr/common.hpp"
#include "cxr/nn.hpp"
#include "cxr/preprocess.hpp"

namespace cxr {

namespace {

using i64 = std::int64_t;

void check_split(const ClassifierModel& model, const DatasetSplit& split) {
  if (split.records.empty())
    throw ValidationError(
        fmt::format("split '{}' has no records to evaluate", split.name));
  const i64 c = static_cast<i64>(split.vocab.size());
  if (c != model.spec().num_classes)
    throw ValidationError(fmt::format(
        "split '{}' has a {}-class vocabulary but the model outputs {} "
        "classes",
        split.name, c, model.spec().num_classes));
}

}  // namespace

Tensor collect_logits(ClassifierModel& model, const DatasetSplit& split,
                      i64 batch) {
  check_split(model, split);
  if (batch < 1)
    throw ValidationError(fmt::format("batch must be >= 1, got {}", batch));

  const i64 n = static_cast<i64>(split.records.size());
  const i64 c = static_cast<i64>(split.vocab.size());
  const i64 s = model.profile().input_size;

  Tensor logits({n, c});
  nn::Ctx ctx;
  ctx.train = false;
  ctx.need_grad = false;
  ctx.dropout_key = 0;

  for (i64 start = 0; start < n; start += batch) {
    const i64 rows = std::min<i64>(batch, n - start);
    Tensor x({rows, 3, s, s});
    for (i64 r = 0; r < rows; ++r) {
      const SampleRecord& rec =
          split.records[static_cast<std::size_t>(start + r)];
      Tensor img;
      try {
        img = load_and_standardize(rec.path, model.profile());
      } catch (const Error& e) {
        throw FileError(fmt::format("while evaluating sample {}: {}",
                                    rec.image_id, e.what()));
      }
      std::memcpy(x.data() + r * 3 * s * s, img.data(),
                  sizeof(float) * static_cast<std::size_t>(3 * s * s));
    }
    const Tensor out = model.forward(x, ctx);
    std::memcpy(logits.data() + start * c, out.data(),
                sizeof(float) * static_cast<std::size_t>(rows * c));
  }
  return logits;
}

Tensor stack_targets(const DatasetSplit& split) {
  if (split.records.empty())
    throw ValidationError(
        fmt::format("split '{}' has no records to evaluate", split.name));
  const i64 n = static_cast<i64>(split.records.size());
  const i64 c = static_cast<i64>(split.vocab.size());
  Tensor targets({n, c});
  for (i64 r = 0; r < n; ++r) {
    const SampleRecord& rec = split.records[static_cast<std::size_t>(r)];
    if (static_cast<i64>(rec.target.size()) != c)
      throw ValidationError(fmt::format(
          "sample {} has no target vector; run target attachment first",
          rec.image_id));
    std::memcpy(targets.data() + r * c, rec.target.data(),
                sizeof(float) * static_cast<std::size_t>(c));
  }
  return targets;
}

EvalReport evaluate_model(ClassifierModel& model, const DatasetSplit& split,
                          const EvalPassOptions& options,
                          const std::string& model_name) {
  check_split(model, split);
  const Tensor targets = stack_targets(split);
  const Tensor logits = collect_logits(model, split, options.batch);
  EvalOptions mo;
  mo.threshold = options.threshold;
  mo.focal = options.focal;
  const std::string name =
      model_name.empty() ? model.spec().arch : model_name;
  return evaluate_logits(name, logits, targets, split.vocab, mo);
}

}  // namespace cxr
