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
// The three classifier architectures, built layer-for-layer after the
// standard pretrained definitions, with a multi-label head sized to the run's
// vocabulary, a configurable freeze policy and a named-layer table for
// activation capture.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cxr/checkpoint.hpp"
#include "cxr/nn.hpp"
#include "cxr/profiles.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

struct ModelSpec {
  std::string arch;  // alexnet | resnet152 | inception_v3
  int num_classes = 14;
  /// When true, backbone weights are loaded from the weight store; a missing
  /// or incomplete store is a hard error, never a silent random init.
  bool pretrained = false;
  std::string freeze_policy = "up_to_boundary";  // none | backbone | up_to_boundary
  std::uint64_t seed = 0;
  /// 0 keeps the architecture's native input size; smaller values scale the
  /// run down (every stage is size-agnostic).
  std::int64_t input_size = 0;
  /// Directory holding <arch>.cxrw backbones; empty falls back to the
  /// CXR_WEIGHTS_DIR environment variable, then "weights".
  std::string weights_dir;

  void validate() const;
};

class ClassifierModel {
 public:
  ClassifierModel(ModelSpec spec, ArchProfile profile,
                  std::unique_ptr<nn::Sequential> net, std::string head_name);
  ClassifierModel(ClassifierModel&&) = default;
  ClassifierModel& operator=(ClassifierModel&&) = default;

  /// x: (B, 3, S, S) -> raw logits (B, num_classes), no activation.
  Tensor forward(const Tensor& x, const nn::Ctx& ctx);
  /// dlogits: (B, num_classes); accumulates parameter gradients.
  Tensor backward(const Tensor& dlogits);

  const ModelSpec& spec() const { return spec_; }
  const ArchProfile& profile() const { return profile_; }
  const std::string& head_name() const { return head_name_; }
  nn::Module& net() { return *net_; }

  std::vector<std::pair<std::string, nn::Param*>> named_params();
  /// Exactly the optimizer's parameter set: trainable and not a buffer.
  std::vector<std::pair<std::string, nn::Param*>> trainable_parameters();

  /// All module names, forward order.
  std::vector<std::string> layer_names() const;
  /// Accepts "early" / "middle" / "final" (mapped through the profile's cam
  /// layers) or an explicit module name; throws ValidationError with
  /// candidates when absent.
  nn::Module* resolve_layer(const std::string& name_or_depth);

  /// none: everything trainable. backbone: only the head. up_to_boundary:
  /// trainable from the profile's freeze_boundary onward (head included).
  /// Buffers are never trainable. A frozen batch-norm layer also stops
  /// updating its running statistics.
  void apply_freeze_policy(const std::string& policy);

  std::uint64_t parameter_checksum();
  std::vector<std::pair<std::string, std::uint64_t>> parameter_checksums();

 private:
  ModelSpec spec_;
  ArchProfile profile_;
  std::unique_ptr<nn::Sequential> net_;
  std::string head_name_;
  std::vector<std::pair<std::string, nn::Module*>> modules_;  // forward order
};

/// Registry constructor. Unknown arch lists the valid names; pretrained=true
/// loads the backbone from the weight store before applying the freeze
/// policy. The head is always freshly initialized from spec.seed.
ClassifierModel build_model(const ModelSpec& spec);

/// Backbone weight store: every parameter except the head, one blob per arch.
std::string backbone_store_path(const ModelSpec& spec);
void export_backbone(ClassifierModel& model, const std::string& path);
void load_backbone(ClassifierModel& model, const std::string& path);

// ---- Checkpoint directory: weights.cxrw + meta.json ---------------------------

struct CheckpointMeta {
  std::string arch;
  int num_classes = 0;
  std::vector<std::string> vocabulary;
  std::string freeze_policy;
  int epoch = 0;
  std::uint64_t config_hash = 0;
  std::int64_t input_size = 0;  // the size actually used (post-override)
  std::uint64_t seed = 0;
};

/// Writes dir/weights.cxrw (all parameters plus `extra` entries, e.g.
/// optimizer state under "optim.") and dir/meta.json.
void save_checkpoint(ClassifierModel& model, const std::string& dir,
                     const CheckpointMeta& meta,
                     const TensorMap& extra = {});

struct LoadedCheckpoint {
  ClassifierModel model;
  CheckpointMeta meta;
  TensorMap extra;  // non-parameter entries, order preserved
};

/// Rebuilds the model from meta.json and restores every parameter strictly:
/// missing or shape-mismatched entries are errors.
LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace cxr
