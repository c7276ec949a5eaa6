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
// Multi-label classification losses on raw logits. Each label column is an
// independent binary problem; reductions run over every (sample, label)
// cell. The scalar cores are templated so tests can run them in double
// precision against finite differences.

#pragma once

#include <cmath>
#include <string>

#include "cxr/tensor.hpp"

namespace cxr {

// ---- Scalar cores ----------------------------------------------------------

/// Binary cross-entropy on a logit, computed in softplus form:
///   max(z, 0) - z*y + log1p(exp(-|z|))
/// which never exponentiates a positive argument and so cannot overflow.
template <typename T>
T bce_logit(T z, T y) {
  return std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
}

/// d/dz of bce_logit: sigmoid(z) - y, in overflow-safe form.
template <typename T>
T bce_logit_grad(T z, T y) {
  const T p = z >= T(0) ? T(1) / (T(1) + std::exp(-z))
                        : std::exp(z) / (T(1) + std::exp(z));
  return p - y;
}

/// Focal modulation parameters. alpha scales every cell; with
/// balance_negatives enabled, positive cells keep alpha and negative cells
/// get (1 - alpha) instead (off by default).
struct FocalParams {
  double gamma = 2.0;
  double alpha = 0.25;
  bool balance_negatives = false;

  /// Throws ValidationError unless gamma >= 0 and alpha in (0, 1].
  void validate() const;
};

namespace detail {
/// p_t (the probability assigned to the true class) is clamped away from
/// {0,1} inside the modulating factor only; the underlying cross-entropy
/// keeps its exact softplus form. Prevents 0^gamma * inf at saturation.
template <typename T>
T clamp_pt(T pt) {
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  return pt < lo ? lo : (pt > hi ? hi : pt);
}

template <typename T>
T alpha_t(T y, const FocalParams& fp) {
  const T a = static_cast<T>(fp.alpha);
  return (fp.balance_negatives && y < T(0.5)) ? T(1) - a : a;
}
}  // namespace detail

/// Focal loss on a logit: alpha_t * (1 - p_t)^gamma * bce_logit(z, y),
/// where p_t is the probability assigned to the true class.
template <typename T>
T focal_logit(T z, T y, const FocalParams& fp) {
  const T p = z >= T(0) ? T(1) / (T(1) + std::exp(-z))
                        : std::exp(z) / (T(1) + std::exp(z));
  const T pt = detail::clamp_pt(y >= T(0.5) ? p : T(1) - p);
  const T mod = std::pow(T(1) - pt, static_cast<T>(fp.gamma));
  return detail::alpha_t(y, fp) * mod * bce_logit(z, y);
}

/// d/dz of focal_logit. With u = 1 - p_t and s = +1 for positive cells,
/// -1 for negative cells:
///   d/dz = -s * alpha_t * u^gamma * (gamma * p_t * bce + u)
/// (reduces to alpha_t * (sigmoid(z) - y) at gamma = 0).
template <typename T>
T focal_logit_grad(T z, T y, const FocalParams& fp) {
  const T p = z >= T(0) ? T(1) / (T(1) + std::exp(-z))
                        : std::exp(z) / (T(1) + std::exp(z));
  const bool positive = y >= T(0.5);
  const T pt = detail::clamp_pt(positive ? p : T(1) - p);
  const T u = T(1) - pt;
  const T g = static_cast<T>(fp.gamma);
  const T core = std::pow(u, g) * (g * pt * bce_logit(z, y) + u);
  const T s = positive ? T(1) : T(-1);
  return -s * detail::alpha_t(y, fp) * core;
}

// ---- Batch wrappers ----------------------------------------------------------

enum class Reduction { kMean, kSum, kNone };

/// Reduced BCE over every element (kNone is invalid here; use the _map form).
/// Throws ValidationError on shape mismatch, NumericalError on non-finite
/// logits.
double bce_loss(const Tensor& logits, const Tensor& targets,
                Reduction red = Reduction::kMean);

/// Elementwise BCE written into `out` (reshaped to match).
void bce_loss_map(const Tensor& logits, const Tensor& targets, Tensor& out);

/// grad[i] = scale * d(reduced bce)/d(logit[i]); grad is overwritten.
void bce_loss_grad(const Tensor& logits, const Tensor& targets, Tensor& grad,
                   Reduction red = Reduction::kMean, float scale = 1.0f);

double focal_loss(const Tensor& logits, const Tensor& targets,
                  const FocalParams& fp, Reduction red = Reduction::kMean);
void focal_loss_map(const Tensor& logits, const Tensor& targets,
                    const FocalParams& fp, Tensor& out);
void focal_loss_grad(const Tensor& logits, const Tensor& targets,
                     const FocalParams& fp, Tensor& grad,
                     Reduction red = Reduction::kMean, float scale = 1.0f);

/// Training-loss selector: "bce" or "focal" plus focal parameters.
struct LossSpec {
  std::string kind = "focal";
  FocalParams focal;

  double value(const Tensor& logits, const Tensor& targets) const;
  void grad(const Tensor& logits, const Tensor& targets, Tensor& out,
            float scale = 1.0f) const;
};

}  // namespace cxr
