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

#include "cxr/profiles.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "cxr/common.hpp"

namespace cxr {

void ArchProfile::validate() const {
  if (name.empty()) throw ValidationError("profile name is empty");
  if (input_size <= 0)
    throw ValidationError(fmt::format("profile {}: input_size must be > 0, got {}",
                                      name, input_size));
  for (const float s : norm_std)
    if (!(s > 0.0f))
      throw ValidationError(fmt::format("profile {}: norm_std must be > 0", name));
}

ArchProfile builtin_profile(const std::string& arch) {
  // cam_layers: early/middle/final activation stages; final is the last
  // convolutional stage before pooling into the classifier head.
  if (arch == "alexnet") {
    return ArchProfile{
        .name = "alexnet",
        .input_size = 224,
        .freeze_boundary = "classifier",
        .cam_layers = {.early = "features.1", .middle = "features.7",
                       .final = "features.11"},
    };
  }
  if (arch == "resnet152") {
    return ArchProfile{
        .name = "resnet152",
        .input_size = 224,
        .freeze_boundary = "layer4",
        .cam_layers = {.early = "layer1.0", .middle = "layer2.7",
                       .final = "layer4.2"},
    };
  }
  if (arch == "inception_v3") {
    return ArchProfile{
        .name = "inception_v3",
        .input_size = 299,
        .freeze_boundary = "Mixed_7c",
        .cam_layers = {.early = "Conv2d_2b_3x3", .middle = "Mixed_6e",
                       .final = "Mixed_7c"},
    };
  }
  throw ValidationError(fmt::format("unknown architecture '{}'; available: {}",
                                    arch, fmt::join(builtin_profile_names(), ", ")));
}

const std::vector<std::string>& builtin_profile_names() {
  static const std::vector<std::string> names = {"alexnet", "resnet152",
                                                 "inception_v3"};
  return names;
}

}  // namespace cxr
