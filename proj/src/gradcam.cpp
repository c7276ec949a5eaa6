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

#include "cxr/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cxr/common.hpp"
#include "cxr/kernels.hpp"
#include "cxr/nn.hpp"
#include "json.hpp"

namespace cxr {

namespace {

using i64 = std::int64_t;

/// Unifies the accepted (K, h, w) / (1, K, h, w) layouts.
struct Grid {
  const float* data;
  i64 k, h, w;
};

Grid as_grid(const Tensor& t, const char* what) {
  if (t.ndim() == 3) return {t.data(), t.dim(0), t.dim(1), t.dim(2)};
  if (t.ndim() == 4 && t.dim(0) == 1)
    return {t.data(), t.dim(1), t.dim(2), t.dim(3)};
  throw ValidationError(fmt::format(
      "{} must be (K, h, w) or (1, K, h, w), got {}", what, t.shape_str()));
}

/// Restores a layer's capture switch no matter how compute_cam exits.
struct CaptureGuard {
  nn::Module* m;
  explicit CaptureGuard(nn::Module* mod) : m(mod) { m->set_capture(true); }
  ~CaptureGuard() { m->set_capture(false); }
  CaptureGuard(const CaptureGuard&) = delete;
  CaptureGuard& operator=(const CaptureGuard&) = delete;
};

std::string resolve_layer_name(const ClassifierModel& model,
                               const std::string& layer) {
  const CamLayers& cams = model.profile().cam_layers;
  if (layer == "early") return cams.early;
  if (layer == "middle") return cams.middle;
  if (layer == "final") return cams.final;
  return layer;
}

cv::Mat to_u8(const Tensor& v01, i64 plane, i64 h, i64 w) {
  cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
  const float* src = v01.data() + plane * h * w;
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      const float v = std::clamp(src[y * w + x], 0.0f, 1.0f);
      m.at<std::uint8_t>(static_cast<int>(y), static_cast<int>(x)) =
          static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return m;
}

cv::Mat rgb_tensor_to_bgr_mat(const Tensor& rgb01) {
  if (rgb01.ndim() != 3 || rgb01.dim(0) != 3)
    throw ValidationError(
        fmt::format("expected an RGB (3, H, W) tensor, got {}",
                    rgb01.shape_str()));
  const i64 h = rgb01.dim(1), w = rgb01.dim(2);
  std::vector<cv::Mat> bgr = {to_u8(rgb01, 2, h, w), to_u8(rgb01, 1, h, w),
                              to_u8(rgb01, 0, h, w)};
  cv::Mat out;
  cv::merge(bgr, out);
  return out;
}

std::string sanitize_component(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c == ' ' || c == '\t' || c == '/' || c == '\\') c = '_';
  return out;
}

std::string id_stem(const std::string& image_id) {
  const auto stem = std::filesystem::path(image_id).stem().string();
  return stem.empty() ? image_id : stem;
}

}  // namespace

Tensor cam_combine(const Tensor& acts, const Tensor& grads, float* raw_max,
                   bool* zero_map) {
  const Grid a = as_grid(acts, "activations");
  const Grid g = as_grid(grads, "gradients");
  if (a.k != g.k || a.h != g.h || a.w != g.w)
    throw ValidationError(fmt::format(
        "activation grid {} and gradient grid {} disagree", acts.shape_str(),
        grads.shape_str()));

  const i64 hw = a.h * a.w;
  std::vector<double> wk(static_cast<std::size_t>(a.k));
  for (i64 k = 0; k < a.k; ++k) {
    double s = 0.0;
    const float* gk = g.data + k * hw;
    for (i64 i = 0; i < hw; ++i) s += static_cast<double>(gk[i]);
    wk[static_cast<std::size_t>(k)] = s / static_cast<double>(hw);
  }

  std::vector<double> raw(static_cast<std::size_t>(hw), 0.0);
  for (i64 k = 0; k < a.k; ++k) {
    const double w = wk[static_cast<std::size_t>(k)];
    const float* ak = a.data + k * hw;
    for (i64 i = 0; i < hw; ++i)
      raw[static_cast<std::size_t>(i)] += w * static_cast<double>(ak[i]);
  }

  double peak = 0.0;
  for (double& v : raw) {
    v = std::max(v, 0.0);
    peak = std::max(peak, v);
  }
  if (raw_max) *raw_max = static_cast<float>(peak);
  if (zero_map) *zero_map = (peak == 0.0);

  Tensor out({a.h, a.w});
  if (peak > 0.0)
    for (i64 i = 0; i < hw; ++i)
      out.data()[i] =
          static_cast<float>(raw[static_cast<std::size_t>(i)] / peak);
  return out;
}

Heatmap compute_cam(ClassifierModel& model, const Tensor& image,
                    int class_index, const std::string& layer) {
  const int nc = model.spec().num_classes;
  if (class_index < 0 || class_index >= nc)
    throw ValidationError(fmt::format(
        "class index {} is outside the model's [0, {}) range", class_index,
        nc));

  Tensor x = image;
  if (x.ndim() == 3) x.resize({1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.ndim() != 4 || x.dim(0) != 1)
    throw ValidationError(fmt::format(
        "expected one image as (3, S, S) or (1, 3, S, S), got {}",
        image.shape_str()));

  nn::Module* tap = model.resolve_layer(layer);
  const CaptureGuard guard(tap);

  const nn::Ctx ctx{/*train=*/false, /*need_grad=*/true, /*dropout_key=*/0};
  const Tensor logits = model.forward(x, ctx);

  Tensor dlogits = Tensor::zeros(logits.shape());
  dlogits.data()[class_index] = 1.0f;
  model.backward(dlogits);

  const Tensor& acts = tap->captured_output();
  const Tensor& grads = tap->captured_gradient();

  Heatmap hm;
  hm.source_layer = resolve_layer_name(model, layer);
  hm.class_index = class_index;
  hm.grid_h = acts.dim(-2);
  hm.grid_w = acts.dim(-1);
  const Tensor small = cam_combine(acts, grads, &hm.raw_max, &hm.zero_map);

  const i64 s = x.dim(2);
  hm.values = Tensor({s, s});
  kern::resize_bilinear(small.data(), 1, hm.grid_h, hm.grid_w,
                        hm.values.data(), s, s);
  // Bilinear resampling rarely lands a sample exactly on the grid peak, so
  // the interpolated map tops out below 1; restore the peak-at-1 contract.
  if (!hm.zero_map) {
    float top = 0.0f;
    for (i64 i = 0; i < hm.values.numel(); ++i)
      top = std::max(top, hm.values.data()[i]);
    if (top > 0.0f)
      for (i64 i = 0; i < hm.values.numel(); ++i) hm.values.data()[i] /= top;
  }

  // The map is an inference artifact; leave no gradient residue behind.
  nn::zero_grads(model.net());
  return hm;
}

CamSweep layer_sweep(ClassifierModel& model, const Tensor& image,
                     int class_index) {
  CamSweep sweep;
  sweep.early = compute_cam(model, image, class_index, "early");
  sweep.middle = compute_cam(model, image, class_index, "middle");
  sweep.final = compute_cam(model, image, class_index, "final");
  return sweep;
}

Tensor colormap_rgb(const Tensor& map01) {
  if (map01.ndim() != 2 || map01.empty())
    throw ValidationError(fmt::format("expected a (H, W) map, got {}",
                                      map01.shape_str()));
  const i64 h = map01.dim(0), w = map01.dim(1);
  cv::Mat colored;
  cv::applyColorMap(to_u8(map01, 0, h, w), colored, cv::COLORMAP_INFERNO);

  Tensor out({3, h, w});
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      const auto& bgr =
          colored.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x));
      out.data()[0 * h * w + y * w + x] = static_cast<float>(bgr[2]) / 255.0f;
      out.data()[1 * h * w + y * w + x] = static_cast<float>(bgr[1]) / 255.0f;
      out.data()[2 * h * w + y * w + x] = static_cast<float>(bgr[0]) / 255.0f;
    }
  return out;
}

Tensor load_grayscale01(const std::string& path, i64 h, i64 w) {
  const cv::Mat raw = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (raw.empty())
    throw FileError(fmt::format("cannot read image '{}'", path));
  cv::Mat sized;
  cv::resize(raw, sized, cv::Size(static_cast<int>(w), static_cast<int>(h)),
             0, 0, cv::INTER_LINEAR);

  Tensor out({h, w});
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x)
      out.data()[y * w + x] =
          static_cast<float>(
              sized.at<std::uint8_t>(static_cast<int>(y), static_cast<int>(x))) /
          255.0f;
  return out;
}

Tensor blend_overlay(const Tensor& colored, const Tensor& gray,
                     double opacity) {
  if (!(opacity >= 0.0 && opacity <= 1.0))
    throw ValidationError(
        fmt::format("opacity must lie in [0, 1], got {}", opacity));
  if (colored.ndim() != 3 || colored.dim(0) != 3)
    throw ValidationError(fmt::format("expected (3, H, W) colors, got {}",
                                      colored.shape_str()));
  if (gray.ndim() != 2 || gray.dim(0) != colored.dim(1) ||
      gray.dim(1) != colored.dim(2))
    throw ValidationError(
        fmt::format("grayscale {} does not match color planes {}",
                    gray.shape_str(), colored.shape_str()));

  const i64 hw = gray.numel();
  const float a = static_cast<float>(opacity);
  Tensor out(colored.shape());
  for (i64 c = 0; c < 3; ++c)
    for (i64 i = 0; i < hw; ++i)
      out.data()[c * hw + i] =
          a * colored.data()[c * hw + i] + (1.0f - a) * gray.data()[i];
  return out;
}

void write_rgb_png(const Tensor& rgb01, const std::string& path) {
  const cv::Mat bgr = rgb_tensor_to_bgr_mat(rgb01);
  if (!cv::imwrite(path, bgr))
    throw FileError(fmt::format("cannot write image '{}'", path));
}

void write_overlay_png(const Heatmap& hm, const std::string& original_image,
                       double opacity, const std::string& out_path) {
  if (hm.values.ndim() != 2 || hm.values.empty())
    throw ValidationError(
        fmt::format("heatmap values must be a non-empty (H, W) map, got {}",
                    hm.values.shape_str()));
  const Tensor gray =
      load_grayscale01(original_image, hm.values.dim(0), hm.values.dim(1));
  write_rgb_png(blend_overlay(colormap_rgb(hm.values), gray, opacity),
                out_path);
}

void write_panel_png(const CamSweep& sweep, const std::string& original_image,
                     double opacity, const std::string& out_path) {
  constexpr int kHeader = 22;
  constexpr int kGap = 4;

  std::vector<cv::Mat> tiles;
  for (const Heatmap* hm : {&sweep.early, &sweep.middle, &sweep.final}) {
    const Tensor gray = load_grayscale01(original_image, hm->values.dim(0),
                                         hm->values.dim(1));
    const Tensor blended =
        blend_overlay(colormap_rgb(hm->values), gray, opacity);
    cv::Mat tile = rgb_tensor_to_bgr_mat(blended);

    cv::Mat framed(tile.rows + kHeader, tile.cols, CV_8UC3,
                   cv::Scalar(32, 32, 32));
    tile.copyTo(framed(cv::Rect(0, kHeader, tile.cols, tile.rows)));
    cv::putText(framed,
                fmt::format("{} ({}x{})", hm->source_layer, hm->grid_h,
                            hm->grid_w),
                {6, kHeader - 7}, cv::FONT_HERSHEY_SIMPLEX, 0.42,
                cv::Scalar(255, 255, 255), 1, cv::LINE_AA);
    tiles.push_back(framed);
  }

  const int rows = tiles[0].rows;
  int cols = -kGap;
  for (const auto& t : tiles) cols += t.cols + kGap;
  cv::Mat panel(rows, cols, CV_8UC3, cv::Scalar(255, 255, 255));
  int x = 0;
  for (const auto& t : tiles) {
    t.copyTo(panel(cv::Rect(x, 0, t.cols, t.rows)));
    x += t.cols + kGap;
  }
  if (!cv::imwrite(out_path, panel))
    throw FileError(fmt::format("cannot write image '{}'", out_path));
}

void write_cam_sidecar(const Heatmap& hm, const std::string& target_class,
                       std::uint64_t checkpoint_checksum,
                       const std::string& path) {
  nlohmann::json j;
  j["target_class"] = target_class;
  j["class_index"] = hm.class_index;
  j["layer"] = hm.source_layer;
  j["raw_max"] = hm.raw_max;
  j["zero_map"] = hm.zero_map;
  j["grid"] = {hm.grid_h, hm.grid_w};
  j["checkpoint_checksum"] = fmt::format("{:016x}", checkpoint_checksum);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileError(fmt::format("cannot write sidecar '{}'", path));
  out << j.dump(2) << "\n";
}

std::string cam_output_name(const std::string& image_id,
                            const std::string& target_class,
                            const std::string& layer) {
  return fmt::format("{}_{}_{}.png", sanitize_component(id_stem(image_id)),
                     sanitize_component(target_class),
                     sanitize_component(layer));
}

std::string panel_output_name(const std::string& image_id,
                              const std::string& target_class) {
  return fmt::format("panel_{}_{}.png", sanitize_component(id_stem(image_id)),
                     sanitize_component(target_class));
}

}  // namespace cxr
