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
// Named-tensor blob: the single binary format for model weights, exported
// backbones and optimizer state. Little-endian, float32 payloads; layout:
//   "CXRW" | u32 version | u64 count | count x
//     { u32 name_len | name | u8 dtype(0=f32) | u32 ndim | i64 dims[] | f32 data[] }

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

/// Ordered so a round trip preserves entry order.
using TensorMap = std::vector<std::pair<std::string, Tensor>>;

void save_tensor_blob(const std::string& path, const TensorMap& tensors);

/// Throws FileError when the file is missing/truncated, ValidationError when
/// the header or an entry is malformed.
TensorMap load_tensor_blob(const std::string& path);

}  // namespace cxr
