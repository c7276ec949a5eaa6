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

#include "cxr/fixtures.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <vector>

#include <fmt/format.h>
#include <opencv2/opencv.hpp>

#include "cxr/common.hpp"
#include "cxr/rng.hpp"

namespace cxr {

namespace {

namespace fs = std::filesystem;

const char* kClasses[] = {"HorizontalBands", "VerticalBands", "Checkerboard"};

/// Adds one pattern at full strength. Band period scales with the canvas so
/// the classes survive downscaling to the model's input size.
void paint(cv::Mat& img, int cls, std::int64_t period) {
  for (int y = 0; y < img.rows; ++y) {
    auto* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.cols; ++x) {
      bool on = false;
      switch (cls) {
        case 0: on = (y / period) % 2 == 0; break;
        case 1: on = (x / period) % 2 == 0; break;
        default: on = ((x / period) % 2) == ((y / period) % 2); break;
      }
      if (on) row[x] = static_cast<std::uint8_t>(std::min(255, row[x] + 170));
    }
  }
}

}  // namespace

void FixtureSpec::validate() const {
  if (dir.empty()) throw ValidationError("fixture: dir must not be empty");
  if (n_train < 1 || n_test < 0)
    throw ValidationError("fixture: need n_train >= 1 and n_test >= 0");
  if (image_size < 16)
    throw ValidationError("fixture: image_size must be >= 16");
  if (second_label_prob < 0.0 || second_label_prob > 1.0 || clean_prob < 0.0 ||
      clean_prob > 1.0)
    throw ValidationError("fixture: probabilities must lie in [0, 1]");
}

FixturePaths make_fixture(const FixtureSpec& spec) {
  spec.validate();
  const fs::path root(spec.dir);
  const fs::path images = root / "images";
  fs::create_directories(images);

  FixturePaths paths;
  paths.image_root = images.string();
  paths.manifest = (root / "labels.csv").string();
  paths.train_list = (root / "train_list.txt").string();
  paths.test_list = (root / "test_list.txt").string();
  paths.vocab_file = (root / "classes.txt").string();

  std::ofstream vocab(paths.vocab_file);
  for (const char* c : kClasses) vocab << c << "\n";

  std::ofstream manifest(paths.manifest);
  manifest << "Image Index,Finding Labels\n";
  std::ofstream train_list(paths.train_list);
  std::ofstream test_list(paths.test_list);

  const int total = spec.n_train + spec.n_test;
  const int n = static_cast<int>(spec.image_size);
  const std::int64_t period = std::max<std::int64_t>(2, spec.image_size / 8);

  for (int i = 0; i < total; ++i) {
    Rng rng(mix_seed({spec.seed, 0xF1D0, static_cast<std::uint64_t>(i)}));

    std::vector<int> labels;
    if (rng.uniform_float() >= static_cast<float>(spec.clean_prob)) {
      labels.push_back(static_cast<int>(rng.bounded(3)));
      if (rng.uniform_float() < static_cast<float>(spec.second_label_prob)) {
        const int second = static_cast<int>(rng.bounded(3));
        if (second != labels[0]) labels.push_back(second);
      }
    }
    std::sort(labels.begin(), labels.end());

    // Dim noisy background, then the pattern(s) on top.
    const int base = 20 + static_cast<int>(rng.bounded(20));
    cv::Mat img(n, n, CV_8UC1);
    for (int y = 0; y < n; ++y) {
      auto* row = img.ptr<std::uint8_t>(y);
      for (int x = 0; x < n; ++x)
        row[x] = static_cast<std::uint8_t>(base + rng.bounded(25));
    }
    for (const int cls : labels) paint(img, cls, period);

    const std::string id = fmt::format("img_{:05d}.png", i);
    if (!cv::imwrite((images / id).string(), img))
      throw FileError(fmt::format("fixture: cannot write {}", id));

    std::string joined;
    for (std::size_t k = 0; k < labels.size(); ++k)
      joined += std::string(k ? "|" : "") + kClasses[labels[k]];
    if (joined.empty()) joined = "No Finding";
    manifest << id << "," << joined << "\n";
    (i < spec.n_train ? train_list : test_list) << id << "\n";
  }
  return paths;
}

}  // namespace cxr
