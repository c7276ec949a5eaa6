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

#include <filesystem>
#include <fstream>
#include <string>

#include "cxr/common.hpp"
#include "cxr/runconfig.hpp"
#include "doctest.h"
#include "test_util.hpp"

namespace fs = std::filesystem;
using cxr::RunConfig;
using cxr::ValidationError;

namespace {

std::string write_file(const std::string& name, const std::string& text) {
  const auto path = cxrtest::scratch_dir("runconfig") / name;
  std::ofstream out(path);
  out << text;
  return path.string();
}

std::string table_text(const RunConfig& cfg) {
  return cxr::toml::serialize(cxr::to_table(cfg));
}

}  // namespace

TEST_SUITE_BEGIN("runconfig");

TEST_CASE("defaults carry the stock training recipe") {
  const RunConfig cfg = cxr::resolve_config("", {});
  CHECK(cfg.epochs == 20);
  CHECK(cfg.batch_train == 64);
  CHECK(cfg.batch_eval == 32);
  CHECK(cfg.lr_step_epochs == 5);
  CHECK(cfg.lr_factor == 0.1);
  CHECK(cfg.base_lr == 1e-4);
  CHECK(cfg.optimizer == "adam");
  CHECK(cfg.loss_kind == "focal");
  CHECK(cfg.gamma == 2.0);
  CHECK(cfg.alpha == 0.25);
  CHECK(cfg.arch == "resnet152");
  CHECK_FALSE(cfg.pretrained);
  CHECK(cfg.freeze_policy == "up_to_boundary");
  CHECK(cfg.threshold == 0.5);
  CHECK(cfg.fraction == 1.0);

  // The provenance table always spells out every knob, even defaulted ones.
  const auto t = cxr::to_table(cfg);
  CHECK(t.entries().size() == 30);
  CHECK(t.get_int("train.batch_train", 0) == 64);
  CHECK(t.get_int("train.batch_eval", 0) == 32);
  CHECK(t.get_int("train.epochs", 0) == 20);
  CHECK(t.get_int("train.lr_step_epochs", 0) == 5);
  CHECK(t.get_double("train.lr_factor", 0.0) == 0.1);
}

TEST_CASE("precedence: flags beat the file, the file beats defaults") {
  const std::string file = write_file("layered.toml",
                                      "[train]\n"
                                      "epochs = 7\n"
                                      "base_lr = 0.001\n"
                                      "[model]\n"
                                      "arch = \"alexnet\"\n"
                                      "[loss]\n"
                                      "kind = \"bce\"\n");
  cxr::toml::Table flags;
  flags.set("train.epochs", std::int64_t{3});

  const RunConfig cfg = cxr::resolve_config(file, flags);
  CHECK(cfg.epochs == 3);           // flag wins over file
  CHECK(cfg.base_lr == 0.001);      // file wins over default
  CHECK(cfg.arch == "alexnet");     // file wins over default
  CHECK(cfg.loss_kind == "bce");    // file wins over default
  CHECK(cfg.batch_train == 64);     // untouched default survives
  CHECK(cfg.optimizer == "adam");
}

TEST_CASE("table round trip reproduces the config exactly") {
  RunConfig cfg;
  cfg.image_root = "data/images";
  cfg.manifest = "data/labels.csv";
  cfg.train_split = "out/train.json";
  cfg.fraction = 0.25;
  cfg.subset_seed = 9001;
  cfg.arch = "inception_v3";
  cfg.pretrained = true;
  cfg.input_size = 128;
  cfg.epochs = 11;
  cfg.base_lr = 3e-4;
  cfg.seed = 1234567;
  cfg.loss_kind = "bce";
  cfg.balance_negatives = true;
  cfg.threshold = 0.35;
  cfg.output_dir = "runs/exp1";

  const std::string text = table_text(cfg);
  RunConfig back;
  cxr::apply_table(back, cxr::toml::Table::parse(text));
  CHECK(table_text(back) == text);
  CHECK(back.subset_seed == 9001);
  CHECK(back.seed == 1234567);
  CHECK(back.pretrained);
  CHECK(back.balance_negatives);
}

TEST_CASE("unknown keys are rejected, not silently ignored") {
  RunConfig cfg;
  cxr::toml::Table t;
  t.set("train.lr", 0.001);  // plausible typo for train.base_lr
  CHECK_THROWS_WITH_AS(cxr::apply_table(cfg, t),
                       doctest::Contains("train.lr"), ValidationError);
  try {
    cxr::apply_table(cfg, t);
  } catch (const ValidationError& e) {
    // The message lists the legal keys so the fix is one glance away.
    CHECK(std::string(e.what()).find("train.base_lr") != std::string::npos);
  }

  SUBCASE("a misspelled section is caught the same way") {
    cxr::toml::Table bad;
    bad.set("trainer.epochs", std::int64_t{5});
    CHECK_THROWS_AS(cxr::apply_table(cfg, bad), ValidationError);
  }
}

TEST_CASE("fingerprint is stable and sensitive") {
  const RunConfig a = cxr::resolve_config("", {});
  const RunConfig b = cxr::resolve_config("", {});
  CHECK(cxr::config_fingerprint(a) == cxr::config_fingerprint(b));

  // Same settings via a file: identical fingerprint.
  const std::string file =
      write_file("same.toml", "[train]\nepochs = 20\n");
  const RunConfig c = cxr::resolve_config(file, {});
  CHECK(cxr::config_fingerprint(c) == cxr::config_fingerprint(a));

  RunConfig d = a;
  d.seed = a.seed + 1;
  CHECK(cxr::config_fingerprint(d) != cxr::config_fingerprint(a));
  RunConfig e = a;
  e.loss_kind = "bce";
  CHECK(cxr::config_fingerprint(e) != cxr::config_fingerprint(a));
}

TEST_CASE("the resolved config lands in the output directory") {
  RunConfig cfg;
  cfg.epochs = 2;
  const auto dir = cxrtest::scratch_dir("runconfig_sidecar");
  const std::string path = cxr::write_resolved_config(cfg, dir.string());
  CHECK(fs::path(path).filename() == "run_config.toml");
  REQUIRE(fs::exists(path));

  RunConfig back;
  cxr::apply_table(back, cxr::toml::Table::parse_file(path));
  CHECK(back.epochs == 2);
  CHECK(table_text(back) == table_text(cfg));

  // Rewriting is byte-identical: reruns do not churn provenance files.
  std::ifstream in1(path);
  const std::string first((std::istreambuf_iterator<char>(in1)), {});
  cxr::write_resolved_config(cfg, dir.string());
  std::ifstream in2(path);
  const std::string second((std::istreambuf_iterator<char>(in2)), {});
  CHECK(first == second);
}

TEST_CASE("converters hand the right fields to trainer and model") {
  RunConfig cfg;
  cfg.epochs = 9;
  cfg.batch_train = 16;
  cfg.batch_eval = 4;
  cfg.base_lr = 2e-4;
  cfg.lr_step_epochs = 3;
  cfg.lr_factor = 0.5;
  cfg.seed = 77;
  cfg.checkpoint_every_epochs = 2;
  cfg.cache_images = false;
  cfg.loss_kind = "focal";
  cfg.gamma = 1.5;
  cfg.alpha = 0.4;
  cfg.balance_negatives = true;
  cfg.output_dir = "runs/conv";
  cfg.arch = "alexnet";
  cfg.pretrained = true;
  cfg.freeze_policy = "none";
  cfg.input_size = 96;
  cfg.weights_dir = "wstore";

  const auto t = cxr::to_train_config(cfg);
  CHECK(t.epochs == 9);
  CHECK(t.batch_train == 16);
  CHECK(t.batch_eval == 4);
  CHECK(t.base_lr == 2e-4);
  CHECK(t.lr_step_epochs == 3);
  CHECK(t.lr_factor == 0.5);
  CHECK(t.optimizer == "adam");
  CHECK(t.loss.kind == "focal");
  CHECK(t.loss.focal.gamma == 1.5);
  CHECK(t.loss.focal.alpha == 0.4);
  CHECK(t.loss.focal.balance_negatives);
  CHECK(t.seed == 77);
  CHECK(t.checkpoint_every_epochs == 2);
  CHECK(t.out_dir == "runs/conv");
  CHECK_FALSE(t.cache_images);
  CHECK(t.config_hash == cxr::config_fingerprint(cfg));

  const auto spec = cxr::to_model_spec(cfg, 14);
  CHECK(spec.arch == "alexnet");
  CHECK(spec.num_classes == 14);
  CHECK(spec.pretrained);
  CHECK(spec.freeze_policy == "none");
  CHECK(spec.seed == 77);
  CHECK(spec.input_size == 96);
  CHECK(spec.weights_dir == "wstore");
}

TEST_CASE("validation rejects out-of-range fields") {
  RunConfig cfg;
  SUBCASE("fraction zero") {
    cfg.fraction = 0.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("fraction"),
                         ValidationError);
  }
  SUBCASE("fraction above one") {
    cfg.fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }
  SUBCASE("threshold at the boundary") {
    cfg.threshold = 1.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("threshold"),
                         ValidationError);
  }
  SUBCASE("negative input size") {
    cfg.input_size = -1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }
  SUBCASE("unknown loss kind") {
    cfg.loss_kind = "hinge";
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("hinge"),
                         ValidationError);
  }
  SUBCASE("negative seed via table") {
    cxr::toml::Table t;
    t.set("train.seed", std::int64_t{-4});
    CHECK_THROWS_WITH_AS(cxr::apply_table(cfg, t), doctest::Contains("seed"),
                         ValidationError);
  }
}

TEST_SUITE_END();
