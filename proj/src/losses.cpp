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

#include "cxr/losses.hpp"

#include <fmt/format.h>

#include "cxr/common.hpp"
#include "cxr/kernels.hpp"

namespace cxr {

void FocalParams::validate() const {
  if (gamma < 0.0)
    throw ValidationError(fmt::format("focal gamma must be >= 0, got {}", gamma));
  if (!(alpha > 0.0) || alpha > 1.0)
    throw ValidationError(fmt::format("focal alpha must be in (0, 1], got {}", alpha));
}

namespace {

void check_inputs(const Tensor& logits, const Tensor& targets) {
  if (!logits.same_shape(targets))
    throw ValidationError(fmt::format("loss shape mismatch: logits {} vs targets {}",
                                      logits.shape_str(), targets.shape_str()));
  if (logits.numel() == 0) throw ValidationError("loss on an empty tensor");
  if (!kern::all_finite(logits.data(), logits.numel()))
    throw NumericalError("non-finite logits passed to loss");
}

double reduce(double acc, std::int64_t n, Reduction red) {
  switch (red) {
    case Reduction::kMean: return acc / static_cast<double>(n);
    case Reduction::kSum: return acc;
    case Reduction::kNone:
      throw ValidationError("reduction 'none' returns a matrix; use the _map form");
  }
  return acc;
}

float grad_scale(std::int64_t n, Reduction red, float scale) {
  switch (red) {
    case Reduction::kMean: return scale / static_cast<float>(n);
    case Reduction::kSum: return scale;
    case Reduction::kNone:
      throw ValidationError("reduction 'none' has no scalar gradient");
  }
  return scale;
}

}  // namespace

double bce_loss(const Tensor& logits, const Tensor& targets, Reduction red) {
  check_inputs(logits, targets);
  const auto n = logits.numel();
  // Serial on purpose: a fixed summation order keeps reported losses
  // identical across thread counts, and n is only batch*labels.
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i)
    acc += static_cast<double>(bce_logit(logits[i], targets[i]));
  return reduce(acc, n, red);
}

void bce_loss_map(const Tensor& logits, const Tensor& targets, Tensor& out) {
  check_inputs(logits, targets);
  out.resize(logits.shape());
  const auto n = logits.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    out[i] = bce_logit(logits[i], targets[i]);
}

void bce_loss_grad(const Tensor& logits, const Tensor& targets, Tensor& grad,
                   Reduction red, float scale) {
  check_inputs(logits, targets);
  grad.resize(logits.shape());
  const auto n = logits.numel();
  const float k = grad_scale(n, red, scale);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    grad[i] = k * bce_logit_grad(logits[i], targets[i]);
}

double focal_loss(const Tensor& logits, const Tensor& targets,
                  const FocalParams& fp, Reduction red) {
  fp.validate();
  check_inputs(logits, targets);
  const auto n = logits.numel();
  double acc = 0.0;  // serial for the same reason as bce_loss
  for (std::int64_t i = 0; i < n; ++i)
    acc += static_cast<double>(focal_logit(logits[i], targets[i], fp));
  return reduce(acc, n, red);
}

void focal_loss_map(const Tensor& logits, const Tensor& targets,
                    const FocalParams& fp, Tensor& out) {
  fp.validate();
  check_inputs(logits, targets);
  out.resize(logits.shape());
  const auto n = logits.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    out[i] = focal_logit(logits[i], targets[i], fp);
}

void focal_loss_grad(const Tensor& logits, const Tensor& targets,
                     const FocalParams& fp, Tensor& grad, Reduction red,
                     float scale) {
  fp.validate();
  check_inputs(logits, targets);
  grad.resize(logits.shape());
  const auto n = logits.numel();
  const float k = grad_scale(n, red, scale);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    grad[i] = k * focal_logit_grad(logits[i], targets[i], fp);
}

double LossSpec::value(const Tensor& logits, const Tensor& targets) const {
  if (kind == "bce") return bce_loss(logits, targets);
  if (kind == "focal") return focal_loss(logits, targets, focal);
  throw ValidationError(fmt::format("unknown loss '{}', expected bce or focal", kind));
}

void LossSpec::grad(const Tensor& logits, const Tensor& targets, Tensor& out,
                    float scale) const {
  if (kind == "bce") return bce_loss_grad(logits, targets, out, Reduction::kMean, scale);
  if (kind == "focal")
    return focal_loss_grad(logits, targets, focal, out, Reduction::kMean, scale);
  throw ValidationError(fmt::format("unknown loss '{}', expected bce or focal", kind));
}

}  // namespace cxr
