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

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cxr {

/// Named activation layers Grad-CAM sweeps over, shallow to deep. `final`
/// must be the last convolutional stage of the architecture.
struct CamLayers {
  std::string early;
  std::string middle;
  std::string final;
};

/// Everything preprocessing and fine-tuning need to know about one
/// architecture. Profiles are data: the built-ins match the standard
/// pretrained setups, and every field can be overridden per run (smaller
/// input_size is the supported way to scale experiments down to modest
/// hardware).
struct ArchProfile {
  std::string name;
  std::int64_t input_size = 224;
  std::array<float, 3> norm_mean = {0.485f, 0.456f, 0.406f};
  std::array<float, 3> norm_std = {0.229f, 0.224f, 0.225f};
  /// First layer (in forward order) that stays trainable under the
  /// freeze-up-to-boundary policy.
  std::string freeze_boundary;
  CamLayers cam_layers;

  /// Throws ValidationError when sizes or statistics are unusable.
  void validate() const;
};

/// Built-in profile for "alexnet", "resnet152", or "inception_v3"; throws
/// ValidationError listing the known names otherwise.
ArchProfile builtin_profile(const std::string& arch);

const std::vector<std::string>& builtin_profile_names();

}  // namespace cxr
