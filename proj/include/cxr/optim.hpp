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
// Adam over an explicit parameter list. The optimizer never walks the model
// itself: whoever constructs it decides what is trainable, which is how the
// freeze policies stay authoritative.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cxr/checkpoint.hpp"
#include "cxr/nn.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

class Adam {
 public:
  /// `params` is typically model.trainable_parameters(); names key the
  /// exported state. Empty list is an error (nothing to optimize points at a
  /// config bug, e.g. everything frozen).
  Adam(std::vector<std::pair<std::string, nn::Param*>> params, AdamConfig cfg);

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  std::int64_t steps() const { return t_; }

  /// One update from the gradients currently stored on the parameters.
  void step();

  /// Moment tensors and the step counter, prefixed "optim." so they can ride
  /// in a checkpoint blob next to model parameters without collision.
  TensorMap export_state() const;
  /// Strict inverse of export_state: unknown, missing or misshapen entries
  /// are errors (they mean the trainable set changed since the checkpoint).
  void import_state(const TensorMap& state);

 private:
  struct Slot {
    std::string name;
    nn::Param* p;
    Tensor m, v;
  };
  std::vector<Slot> slots_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace cxr
