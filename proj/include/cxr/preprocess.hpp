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
// Image decoding and normalization. OpenCV is used for decoding only; all
// resampling goes through the project's own kernels so pixels are identical
// across platforms and library versions. Tensors here are CHW float32, RGB.

#pragma once

#include <cstdint>
#include <string>

#include "cxr/profiles.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

enum class Policy { kTrain, kEval };

/// Decodes an image file to (3, H, W) float32 in [0, 255], RGB channel
/// order; grayscale inputs are replicated across the three channels.
/// Throws FileError (carrying the path) when the file is missing or does
/// not decode.
Tensor load_image_chw(const std::string& path);

/// Bilinear-resizes to (3, size, size) and maps each channel through
/// (x/255 - mean[c]) / std[c].
Tensor standardize(const Tensor& chw255, const ArchProfile& profile);

/// Inverse of the normalization (not the resize): standardized values back
/// to the [0, 255] intensity scale, same shape.
Tensor destandardize(const Tensor& standardized, const ArchProfile& profile);

/// load_image_chw + standardize.
Tensor load_and_standardize(const std::string& path, const ArchProfile& profile);

/// Training augmentation on a standardized tensor: square random-resized
/// crop with area scale in [0.8, 1.0] followed by a horizontal flip with
/// probability 0.5, both derived from `key` alone. Policy::kEval is the
/// identity. Output shape always equals input shape.
Tensor augment(const Tensor& image, std::uint64_t key, Policy policy);

}  // namespace cxr
