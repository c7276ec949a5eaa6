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
// Writes a small deterministic synthetic corpus (three pattern classes) in
// the exact layout `cxr prepare` ingests: images/, labels.csv, split lists
// and a class vocabulary. Exists so the full pipeline can be exercised and
// demonstrated without any external dataset.

#include <cstdint>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "cxr/common.hpp"
#include "cxr/fixtures.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate a synthetic three-class corpus for pipeline runs"};

  cxr::FixtureSpec spec;
  app.add_option("--dir", spec.dir, "output directory")->required();
  app.add_option("--n-train", spec.n_train, "training images");
  app.add_option("--n-test", spec.n_test, "test images");
  app.add_option("--size", spec.image_size, "image side length in pixels");
  app.add_option("--seed", spec.seed, "generator seed");
  app.add_option("--second-label-prob", spec.second_label_prob,
                 "chance of a second pattern per image");
  app.add_option("--clean-prob", spec.clean_prob,
                 "chance of a pattern-free image");

  try {
    app.parse(argc, argv);
    const auto paths = cxr::make_fixture(spec);
    fmt::print("image root: {}\n", paths.image_root);
    fmt::print("manifest:   {}\n", paths.manifest);
    fmt::print("train list: {}\n", paths.train_list);
    fmt::print("test list:  {}\n", paths.test_list);
    fmt::print("vocabulary: {}\n", paths.vocab_file);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const cxr::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}
