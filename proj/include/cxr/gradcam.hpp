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
// Class activation heatmaps: weight a convolutional layer's activation
// channels by the spatially averaged gradient of one class logit, rectify,
// max-normalize and upsample. The logit (not the post-sigmoid probability)
// is differentiated, so saturated classes still produce informative maps.
//
// compute_cam toggles capture state on the model's layers; calls on the same
// model instance must be serialized. Distinct instances are independent.

#pragma once

#include <cstdint>
#include <string>

#include "cxr/models.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

struct Heatmap {
  /// (H, W) at the model's input resolution, every value in [0, 1]. The map
  /// peaks at exactly 1 unless `zero_map` is set (then it is identically 0).
  Tensor values;
  std::string source_layer;  // resolved module name, never a symbolic depth
  int class_index = 0;
  /// Peak of the rectified pre-normalization map; 0 means the logit did not
  /// depend positively on this layer anywhere.
  float raw_max = 0.0f;
  bool zero_map = false;
  /// Activation-grid shape before upsampling (the layer's spatial extent).
  std::int64_t grid_h = 0, grid_w = 0;
};

/// Channel combination on captured tensors: w_k = spatial mean of grads_k,
/// map = ReLU(sum_k w_k * acts_k), divided by its max (all-zero guard).
/// Accepts (K, h, w) or (1, K, h, w); shapes must match. Accumulates in
/// double, so the result is deterministic and scale-stable.
Tensor cam_combine(const Tensor& acts, const Tensor& grads,
                   float* raw_max = nullptr, bool* zero_map = nullptr);

/// The full pipeline for one image (3, S, S) or (1, 3, S, S): capture at
/// `layer` ("early" / "middle" / "final" or an explicit module name), forward
/// in inference mode, backpropagate the one-hot logit, combine, upsample
/// bilinearly to (S, S). Parameter gradients are zeroed afterwards; capture
/// state is always restored.
Heatmap compute_cam(ClassifierModel& model, const Tensor& image,
                    int class_index, const std::string& layer);

struct CamSweep {
  Heatmap early, middle, final;
};

/// compute_cam at the profile's three symbolic depths.
CamSweep layer_sweep(ClassifierModel& model, const Tensor& image,
                     int class_index);

// ---- Rendering -------------------------------------------------------------

/// (H, W) map in [0, 1] -> (3, H, W) RGB in [0, 1] through a perceptual
/// colormap (dark at 0, bright at 1).
Tensor colormap_rgb(const Tensor& map01);

/// Grayscale image from disk, bilinearly resized to (h, w), values in [0, 1].
Tensor load_grayscale01(const std::string& path, std::int64_t h,
                        std::int64_t w);

/// opacity * colored + (1 - opacity) * gray, per channel.
/// colored: (3, H, W); gray: (H, W); opacity in [0, 1].
Tensor blend_overlay(const Tensor& colored, const Tensor& gray,
                     double opacity);

/// (3, H, W) floats in [0, 1] -> 8-bit PNG.
void write_rgb_png(const Tensor& rgb01, const std::string& path);

/// The overlay artifact: the original radiograph resized to the heatmap's
/// shape, tinted by the colormapped heatmap at `opacity`.
void write_overlay_png(const Heatmap& hm, const std::string& original_image,
                       double opacity, const std::string& out_path);

/// Side-by-side montage of the three sweep depths, labeled per layer.
void write_panel_png(const CamSweep& sweep, const std::string& original_image,
                     double opacity, const std::string& out_path);

/// JSON sidecar for an overlay: class, layer, raw_max, zero flag, grid shape
/// and the checksum of the producing checkpoint.
void write_cam_sidecar(const Heatmap& hm, const std::string& target_class,
                       std::uint64_t checkpoint_checksum,
                       const std::string& path);

/// "<id-stem>_<class>_<layer>.png" / "panel_<id-stem>_<class>.png", with
/// whitespace and path separators mapped to '_'.
std::string cam_output_name(const std::string& image_id,
                            const std::string& target_class,
                            const std::string& layer);
std::string panel_output_name(const std::string& image_id,
                              const std::string& target_class);

}  // namespace cxr
