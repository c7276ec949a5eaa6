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

#include "cxr/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>

#include "cxr/common.hpp"
#include "cxr/kernels.hpp"
#include "cxr/rng.hpp"

namespace cxr {

Tensor load_image_chw(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw FileError(fmt::format("image not found: {}", path));
  }
  // IMREAD_UNCHANGED keeps 16-bit grayscale as-is so we can rescale it
  // ourselves instead of letting the decoder truncate to 8 bits.
  cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (raw.empty()) {
    throw FileError(fmt::format("cannot decode image: {}", path));
  }

  cv::Mat img;
  raw.convertTo(img, CV_32F);
  if (raw.depth() == CV_16U) {
    img *= 255.0 / 65535.0;
  }

  const int h = img.rows;
  const int w = img.cols;
  const int ch = img.channels();
  Tensor out({3, h, w});
  float* o = out.data();
  const auto plane = static_cast<std::int64_t>(h) * w;
  if (ch == 1) {
    for (int r = 0; r < h; ++r) {
      const float* row = img.ptr<float>(r);
      for (int c = 0; c < w; ++c) {
        const float v = row[c];
        const std::int64_t at = static_cast<std::int64_t>(r) * w + c;
        o[at] = v;
        o[plane + at] = v;
        o[2 * plane + at] = v;
      }
    }
  } else if (ch == 3 || ch == 4) {
    // OpenCV decodes interleaved BGR(A); emit planar RGB and drop alpha.
    for (int r = 0; r < h; ++r) {
      const float* row = img.ptr<float>(r);
      for (int c = 0; c < w; ++c) {
        const float* px = row + static_cast<std::int64_t>(c) * ch;
        const std::int64_t at = static_cast<std::int64_t>(r) * w + c;
        o[at] = px[2];
        o[plane + at] = px[1];
        o[2 * plane + at] = px[0];
      }
    }
  } else {
    throw FileError(
        fmt::format("unsupported channel count {} in image: {}", ch, path));
  }
  return out;
}

namespace {

void check_chw3(const Tensor& t, const char* who) {
  if (t.ndim() != 3 || t.dim(0) != 3 || t.dim(1) < 1 || t.dim(2) < 1) {
    throw ValidationError(fmt::format("{}: expected a (3, H, W) tensor, got {}",
                                      who, t.shape_str()));
  }
}

Tensor resize_chw(const Tensor& chw, std::int64_t oh, std::int64_t ow) {
  const std::int64_t h = chw.dim(1);
  const std::int64_t w = chw.dim(2);
  Tensor out({3, oh, ow});
  kern::resize_bilinear(chw.data(), 3, h, w, out.data(), oh, ow);
  return out;
}

}  // namespace

Tensor standardize(const Tensor& chw255, const ArchProfile& profile) {
  check_chw3(chw255, "standardize");
  profile.validate();
  const std::int64_t s = profile.input_size;
  Tensor out = resize_chw(chw255, s, s);
  const std::int64_t plane = s * s;
  for (int c = 0; c < 3; ++c) {
    // (x/255 - mean)/std computed as (x - 255*mean) / (255*std): a pixel equal
    // to 255*mean cancels exactly, so the normalization fixed point is an
    // exact zero even when the compiler contracts multiplies and adds.
    const float mean255 = profile.norm_mean[c] * 255.0f;
    const float inv = 1.0f / (255.0f * profile.norm_std[c]);
    float* p = out.data() + c * plane;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < plane; ++i) {
      p[i] = (p[i] - mean255) * inv;
    }
  }
  return out;
}

Tensor destandardize(const Tensor& standardized, const ArchProfile& profile) {
  check_chw3(standardized, "destandardize");
  profile.validate();
  const std::int64_t plane = standardized.dim(1) * standardized.dim(2);
  Tensor out = standardized;
  for (int c = 0; c < 3; ++c) {
    const float mean255 = profile.norm_mean[c] * 255.0f;
    const float sd255 = profile.norm_std[c] * 255.0f;
    float* p = out.data() + c * plane;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < plane; ++i) {
      p[i] = p[i] * sd255 + mean255;
    }
  }
  return out;
}

Tensor load_and_standardize(const std::string& path, const ArchProfile& profile) {
  return standardize(load_image_chw(path), profile);
}

Tensor augment(const Tensor& image, std::uint64_t key, Policy policy) {
  check_chw3(image, "augment");
  if (policy == Policy::kEval) {
    return image;
  }
  const std::int64_t h = image.dim(1);
  const std::int64_t w = image.dim(2);

  // Square random-resized crop: pick an area fraction in [0.8, 1.0], take a
  // square of that relative area at a uniform offset, then resize back to the
  // original size. Sub-draw indices are fixed so one key fully determines the
  // transform.
  const float u_scale = counter_uniform(key, 0);
  const float u_top = counter_uniform(key, 1);
  const float u_left = counter_uniform(key, 2);
  const float u_flip = counter_uniform(key, 3);

  const double scale = 0.8 + 0.2 * static_cast<double>(u_scale);
  const double side_frac = std::sqrt(scale);
  const std::int64_t ch = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::lround(static_cast<double>(h) * side_frac)));
  const std::int64_t cw = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::lround(static_cast<double>(w) * side_frac)));
  const std::int64_t crop_h = std::min(ch, h);
  const std::int64_t crop_w = std::min(cw, w);
  const std::int64_t top =
      static_cast<std::int64_t>(static_cast<double>(u_top) * static_cast<double>(h - crop_h + 1));
  const std::int64_t left =
      static_cast<std::int64_t>(static_cast<double>(u_left) * static_cast<double>(w - crop_w + 1));

  Tensor cropped({3, crop_h, crop_w});
  kern::crop(image.data(), 3, h, w, top, left, crop_h, crop_w, cropped.data());
  Tensor out = resize_chw(cropped, h, w);

  if (u_flip < 0.5f) {
    Tensor flipped({3, h, w});
    kern::flip_horizontal(out.data(), 3, h, w, flipped.data());
    return flipped;
  }
  return out;
}

}  // namespace cxr
