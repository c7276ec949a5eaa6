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
// Minimal layer graph: modules own their parameters and the activations they
// need for the backward pass. forward/backward are non-virtual wrappers so
// any module can be asked to capture its output activation and the gradient
// flowing into it — that is the whole attachment surface the class-activation
// mapping needs.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cxr/kernels.hpp"
#include "cxr/tensor.hpp"

namespace cxr::nn {

struct Param {
  Tensor value;
  Tensor grad;  // sized on first ensure_grad(); accumulated by backward
  bool trainable = true;
  /// Persisted in checkpoints but never handed to the optimizer
  /// (batch-norm running statistics).
  bool is_buffer = false;

  enum class Init { kZeros, kOnes, kFanInUniform };
  Init init = Init::kZeros;
  std::int64_t fan_in = 0;  // scale for kFanInUniform

  void ensure_grad();
};

/// Per-call execution context. `train` selects batch statistics and active
/// dropout; `need_grad` makes modules cache what backward will need;
/// `dropout_key` seeds every dropout mask of the step (each layer mixes in
/// its own salt).
struct Ctx {
  bool train = false;
  bool need_grad = false;
  std::uint64_t dropout_key = 0;
};

class Module {
 public:
  virtual ~Module() = default;

  Tensor forward(const Tensor& x, const Ctx& ctx);

  /// Propagates dy (gradient w.r.t. this module's output) to the input,
  /// accumulating parameter gradients along the way. Requires a preceding
  /// forward with need_grad=true.
  Tensor backward(const Tensor& dy);

  /// This module's own parameters, named locally ("weight", "bias", ...).
  virtual std::vector<std::pair<std::string, Param*>> params() { return {}; }
  /// Direct children in forward order, named locally ("conv1", "0", ...).
  virtual std::vector<std::pair<std::string, Module*>> children() { return {}; }

  void set_capture(bool on);
  bool capture() const { return capture_; }
  /// Output activation / incoming gradient recorded by the last
  /// forward/backward while capture was on; throws Error when absent.
  const Tensor& captured_output() const;
  const Tensor& captured_gradient() const;

 protected:
  virtual Tensor do_forward(const Tensor& x, const Ctx& ctx) = 0;
  virtual Tensor do_backward(const Tensor& dy) = 0;

 private:
  bool capture_ = false;
  Tensor cap_out_, cap_grad_;
};

// ---- Registry walks ---------------------------------------------------------

/// Depth-first, parents before children, names joined with '.'; the root
/// itself is the empty name and is omitted.
std::vector<std::pair<std::string, Module*>> named_modules(Module& root);
std::vector<std::pair<std::string, Param*>> named_parameters(Module& root);

/// Fills every parameter from its declared init rule, each from an
/// independent stream keyed by (seed, parameter name) so the result does not
/// depend on traversal order.
void initialize_parameters(Module& root, std::uint64_t seed);

/// Zeroes (and lazily sizes) the grad of every non-buffer parameter.
void zero_grads(Module& root);

// ---- Leaf layers -------------------------------------------------------------

class Conv2d : public Module {
 public:
  Conv2d(std::int64_t in_c, std::int64_t out_c, std::int64_t kh, std::int64_t kw,
         std::int64_t sh, std::int64_t sw, std::int64_t ph, std::int64_t pw,
         bool with_bias);
  /// Square kernel/stride/padding convenience.
  Conv2d(std::int64_t in_c, std::int64_t out_c, std::int64_t k,
         std::int64_t stride = 1, std::int64_t pad = 0, bool with_bias = true)
      : Conv2d(in_c, out_c, k, k, stride, stride, pad, pad, with_bias) {}

  std::vector<std::pair<std::string, Param*>> params() override;

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override;
  Tensor do_backward(const Tensor& dy) override;

 private:
  kern::ConvGeom geom_;
  bool with_bias_;
  Param weight_, bias_;
  kern::ConvScratch scratch_;
  Tensor x_;  // cached input (dw needs it)
};

class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(std::int64_t c, float eps = 1e-5f, float momentum = 0.1f);

  std::vector<std::pair<std::string, Param*>> params() override;
  float eps() const { return eps_; }

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override;
  Tensor do_backward(const Tensor& dy) override;

 private:
  std::int64_t c_;
  float eps_, momentum_;
  Param gamma_, beta_, running_mean_, running_var_;
  Tensor x_, save_mean_, save_invstd_;
  Shape in_shape_;
  bool used_batch_stats_ = false;
};

class ReLU : public Module {
 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override;
  Tensor do_backward(const Tensor& dy) override;

 private:
  Tensor y_;
};

class MaxPool2d : public Module {
 public:
  MaxPool2d(std::int64_t k, std::int64_t stride, std::int64_t pad = 0)
      : kh_(k), kw_(k), sh_(stride), sw_(stride), ph_(pad), pw_(pad) {}

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override;
  Tensor do_backward(const Tensor& dy) override;

 private:
  std::int64_t kh_, kw_, sh_, sw_, ph_, pw_;
  std::vector<std::int64_t> idx_;
  Shape in_shape_, out_shape_;
};

class AvgPool2d : public Module {
 public:
  AvgPool2d(std::int64_t k, std::int64_t stride, std::int64_t pad = 0)
      : kh_(k), kw_(k), sh_(stride), sw_(stride), ph_(pad), pw_(pad) {}

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override;
  Tensor do_backward(const Tensor& dy) override;

 private:
  std::int64_t kh_, kw_, sh_, sw_, ph_, pw_;
  Shape in_shape_, out_shape_;
};

class AdaptiveAvgPool2d : public Module {
 public:
  AdaptiveAvgPool2d(std::int64_t oh, std::int64_t ow) : oh_(oh), ow_(ow) {}

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override;
  Tensor do_backward(const Tensor& dy) override;

 private:
  std::int64_t oh_, ow_;
  Shape in_shape_;
};

class Dropout : public Module {
 public:
  /// `salt` distinguishes the masks of multiple dropout layers sharing one
  /// step key; give each instance in a model a different value.
  explicit Dropout(float p, std::uint64_t salt = 0);

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override;
  Tensor do_backward(const Tensor& dy) override;

 private:
  float p_;
  std::uint64_t salt_;
  std::uint64_t key_ = 0;
  bool active_ = false;
};

class Flatten : public Module {
 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override;
  Tensor do_backward(const Tensor& dy) override;

 private:
  Shape in_shape_;
};

class Linear : public Module {
 public:
  Linear(std::int64_t in, std::int64_t out, bool with_bias = true);

  std::vector<std::pair<std::string, Param*>> params() override;
  std::int64_t in_features() const { return in_; }
  std::int64_t out_features() const { return out_; }

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override;
  Tensor do_backward(const Tensor& dy) override;

 private:
  std::int64_t in_, out_;
  bool with_bias_;
  Param weight_, bias_;
  Tensor x_;
};

// ---- Containers --------------------------------------------------------------

class Sequential : public Module {
 public:
  /// Appends a child; returns the raw pointer for wiring convenience.
  Module* add(std::string name, std::unique_ptr<Module> m);
  template <typename T>
  T* add_as(std::string name, std::unique_ptr<T> m) {
    return static_cast<T*>(add(std::move(name), std::move(m)));
  }
  std::size_t size() const { return kids_.size(); }

  std::vector<std::pair<std::string, Module*>> children() override;

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override;
  Tensor do_backward(const Tensor& dy) override;

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> kids_;
};

// ---- Channel concat (inception branches) -------------------------------------

/// Concatenates (B, Ci, H, W) tensors along channels.
Tensor concat_channels(const std::vector<const Tensor*>& parts);

/// Splits along channels into the given channel counts (must sum to C).
std::vector<Tensor> split_channels(const Tensor& x,
                                   const std::vector<std::int64_t>& channels);

}  // namespace cxr::nn
