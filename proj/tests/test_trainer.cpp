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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "cxr/common.hpp"
#include "cxr/dataset.hpp"
#include "cxr/fixtures.hpp"
#include "cxr/models.hpp"
#include "cxr/trainer.hpp"
#include "doctest.h"
#include "test_util.hpp"

namespace fs = std::filesystem;
using cxr::ClassifierModel;
using cxr::DatasetSplit;
using cxr::FileError;
using cxr::ModelSpec;
using cxr::NumericalError;
using cxr::TrainConfig;
using cxr::ValidationError;

namespace {

/// A fixture rendered to disk and ingested back through the real pipeline.
struct MiniData {
  DatasetSplit train, test;
};

MiniData make_mini(const std::string& name, int n_train, int n_test,
                   std::uint64_t seed) {
  cxr::FixtureSpec fx;
  fx.dir = cxrtest::scratch_dir("trainer_fix_" + name).string();
  fx.n_train = n_train;
  fx.n_test = n_test;
  fx.image_size = 64;  // matches the reduced alexnet input: no resize cost
  fx.seed = seed;
  const auto paths = cxr::make_fixture(fx);

  const auto records = cxr::parse_label_manifest(paths.manifest, paths.image_root);
  const auto vocab = cxr::LabelVocabulary::from_file(paths.vocab_file);
  auto [train, test] =
      cxr::build_splits(records, vocab, paths.train_list, paths.test_list);
  return {std::move(train), std::move(test)};
}

ModelSpec tiny_spec(std::uint64_t seed, const std::string& freeze = "none") {
  ModelSpec spec;
  spec.arch = "alexnet";
  spec.num_classes = 3;
  spec.pretrained = false;
  spec.freeze_policy = freeze;
  spec.seed = seed;
  spec.input_size = 64;
  return spec;
}

TrainConfig tiny_cfg(const std::string& out_dir, int epochs,
                     std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_train = 8;
  cfg.base_lr = 1e-4;
  cfg.loss.kind = "bce";
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  return cfg;
}

std::vector<double> losses_of(const cxr::TrainHistory& h) {
  std::vector<double> v;
  for (const auto& r : h.epochs) v.push_back(r.mean_train_loss);
  return v;
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("step schedule: constant within a step, one decade down per step") {
  TrainConfig cfg;
  cfg.base_lr = 1e-4;
  cfg.lr_step_epochs = 5;
  cfg.lr_factor = 0.1;

  // Plateau structure: every epoch shares its plateau's value bitwise.
  for (int e = 0; e < 20; ++e)
    CHECK(cxr::lr_at(e, cfg) == cxr::lr_at(e - e % 5, cfg));

  CHECK(cxr::lr_at(0, cfg) == 1e-4);
  CHECK(cxr::lr_at(4, cfg) == 1e-4);
  CHECK(cxr::lr_at(5, cfg) == 1e-5);
  // Two and three decades down accumulate rounding; the values must still
  // agree with the decimal targets to ~1 ulp (tolerance pinned at 1e-12).
  CHECK(std::abs(cxr::lr_at(10, cfg) - 1e-6) / 1e-6 < 1e-12);
  CHECK(std::abs(cxr::lr_at(19, cfg) - 1e-7) / 1e-7 < 1e-12);

  CHECK_THROWS_AS(cxr::lr_at(-1, cfg), ValidationError);
}

TEST_CASE("config validation rejects unusable settings") {
  const auto ok = tiny_cfg("unused", 2, 0);
  auto bad = ok;

  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = ok;
  bad.batch_train = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = ok;
  bad.base_lr = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = ok;
  bad.lr_factor = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = ok;
  bad.optimizer = "sgd";
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("adam"),
                       ValidationError);
  bad = ok;
  bad.loss.kind = "hinge";
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = ok;
  bad.out_dir = "";
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("a run leaves complete, parseable bookkeeping behind") {
  const auto data = make_mini("book", 8, 2, 7);
  const auto out = cxrtest::scratch_dir("trainer_book_out");
  auto model = cxr::build_model(tiny_spec(7));
  const auto cfg = tiny_cfg(out.string(), 2, 7);

  const auto hist = cxr::train(model, data.train, cfg);

  REQUIRE(hist.epochs.size() == 2);
  for (const auto& rec : hist.epochs) {
    CHECK(std::isfinite(rec.mean_train_loss));
    CHECK(rec.mean_train_loss > 0.0);
    CHECK(rec.lr == cxr::lr_at(rec.epoch, cfg));  // logged lr is the schedule
    CHECK(rec.wall_time_sec >= 0.0);
    CHECK_FALSE(rec.checkpoint_dir.empty());  // checkpoint_every_epochs == 1
  }
  CHECK(hist.epochs[0].epoch == 0);
  CHECK(hist.epochs[1].epoch == 1);

  for (const std::string leaf :
       {"checkpoints/epoch_001", "checkpoints/epoch_002", "checkpoints/final"}) {
    CAPTURE(leaf);
    CHECK(fs::exists(out / leaf / "weights.cxrw"));
    CHECK(fs::exists(out / leaf / "meta.json"));
  }
  CHECK(hist.final_checkpoint == (out / "checkpoints/final").string());

  // history.jsonl round-trips the records exactly (shortest-round-trip
  // doubles), and the loss curve rendered.
  const auto parsed = cxr::load_history_jsonl((out / "history.jsonl").string());
  REQUIRE(parsed.size() == 2);
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    CHECK(parsed[i].epoch == hist.epochs[i].epoch);
    CHECK(parsed[i].mean_train_loss == hist.epochs[i].mean_train_loss);
    CHECK(parsed[i].lr == hist.epochs[i].lr);
    CHECK(parsed[i].checkpoint_dir == hist.epochs[i].checkpoint_dir);
  }
  CHECK(fs::file_size(out / "loss_curve.png") > 0);

  // The final checkpoint reloads into the trained state bit-for-bit.
  auto reloaded = cxr::load_checkpoint(hist.final_checkpoint);
  CHECK(reloaded.model.parameter_checksum() == model.parameter_checksum());
  CHECK(reloaded.meta.epoch == 2);
  CHECK(reloaded.meta.vocabulary == data.train.vocab.classes());
}

TEST_CASE("same seed reproduces the loss trajectory bitwise; another seed does not") {
  const auto data = make_mini("det", 8, 2, 11);

  const auto run = [&](std::uint64_t model_seed, std::uint64_t train_seed,
                       const std::string& tag) {
    const auto out = cxrtest::scratch_dir("trainer_det_" + tag);
    auto model = cxr::build_model(tiny_spec(model_seed));
    auto cfg = tiny_cfg(out.string(), 2, train_seed);
    cfg.checkpoint_every_epochs = 2;
    const auto hist = cxr::train(model, data.train, cfg);
    return std::pair{losses_of(hist), model.parameter_checksum()};
  };

  const auto [la, ca] = run(5, 9, "a");
  const auto [lb, cb] = run(5, 9, "b");
  CHECK(la == lb);  // doubles compared exactly
  CHECK(ca == cb);

  const auto [lc, cc] = run(5, 10, "c");  // same init, different data order
  CHECK(la != lc);
  CHECK(ca != cc);
}

TEST_CASE("resume continues the exact trajectory of a straight-through run") {
  const auto data = make_mini("res", 8, 2, 13);

  // Straight-through: 4 epochs.
  const auto out_a = cxrtest::scratch_dir("trainer_res_straight");
  std::uint64_t straight_checksum = 0;
  std::vector<cxr::EpochRecord> straight;
  {
    auto model = cxr::build_model(tiny_spec(21));
    auto cfg = tiny_cfg(out_a.string(), 4, 17);
    cfg.checkpoint_every_epochs = 2;
    straight = cxr::train(model, data.train, cfg).epochs;
    straight_checksum = model.parameter_checksum();
  }

  // Interrupted: 2 epochs, then resume from its last checkpoint to 4.
  const auto out_b = cxrtest::scratch_dir("trainer_res_interrupted");
  auto cfg_b = tiny_cfg(out_b.string(), 2, 17);
  cfg_b.checkpoint_every_epochs = 2;
  {
    auto model = cxr::build_model(tiny_spec(21));
    cxr::train(model, data.train, cfg_b);
  }

  auto cfg_c = cfg_b;
  cfg_c.epochs = 4;
  auto resumed = cxr::resume((out_b / "checkpoints/epoch_002").string(),
                             data.train, cfg_c);

  REQUIRE(resumed.history.epochs.size() == 2);  // epochs 2 and 3 only
  for (int i = 0; i < 2; ++i) {
    const auto& r = resumed.history.epochs[static_cast<std::size_t>(i)];
    const auto& s = straight[static_cast<std::size_t>(i + 2)];
    CHECK(r.epoch == s.epoch);
    CHECK(r.lr == s.lr);
    CHECK(r.mean_train_loss == s.mean_train_loss);  // bitwise: same stream
  }
  CHECK(resumed.model.parameter_checksum() == straight_checksum);

  // The interrupted run's history now holds all four epochs.
  const auto merged = cxr::load_history_jsonl((out_b / "history.jsonl").string());
  REQUIRE(merged.size() == 4);
  CHECK(merged[2].epoch == 2);
  CHECK(merged[3].mean_train_loss == straight[3].mean_train_loss);
}

TEST_CASE("resume refuses mismatched runs, naming the differing field") {
  const auto data = make_mini("resguard", 8, 2, 19);
  const auto out = cxrtest::scratch_dir("trainer_resguard_out");
  auto cfg = tiny_cfg(out.string(), 2, 23);
  {
    auto model = cxr::build_model(tiny_spec(29));
    cxr::train(model, data.train, cfg);
  }
  const std::string ckpt = (out / "checkpoints/final").string();

  SUBCASE("different shuffle seed would change the data order") {
    auto cfg2 = cfg;
    cfg2.epochs = 4;
    cfg2.seed = 24;
    CHECK_THROWS_WITH_AS(cxr::resume(ckpt, data.train, cfg2),
                         doctest::Contains("seed"), ValidationError);
  }
  SUBCASE("different vocabulary") {
    auto cfg2 = cfg;
    cfg2.epochs = 4;
    DatasetSplit other = data.train;
    other.vocab = cxr::LabelVocabulary({"X", "Y", "Z"});
    CHECK_THROWS_WITH_AS(cxr::resume(ckpt, other, cfg2),
                         doctest::Contains("vocabulary"), ValidationError);
  }
  SUBCASE("checkpoint already covers the requested epochs") {
    CHECK_THROWS_WITH_AS(cxr::resume(ckpt, data.train, cfg),
                         doctest::Contains("covers"), ValidationError);
  }
  SUBCASE("not a checkpoint directory") {
    CHECK_THROWS_AS(cxr::resume((out / "nowhere").string(), data.train, cfg),
                    FileError);
  }
}

TEST_CASE("a non-finite loss aborts with the step and the offending batch") {
  const auto data = make_mini("abort", 8, 2, 31);
  const auto out = cxrtest::scratch_dir("trainer_abort_out");
  auto model = cxr::build_model(tiny_spec(37));

  // Detonate the head: logits overflow to inf on the first batch.
  for (auto& [name, p] : model.named_params())
    if (name == "classifier.6.weight")
      for (std::int64_t i = 0; i < p->value.numel(); ++i)
        p->value.data()[i] = 1e38f;

  const auto cfg = tiny_cfg(out.string(), 1, 31);
  CHECK_THROWS_WITH_AS(cxr::train(model, data.train, cfg),
                       doctest::Contains("step 0"), NumericalError);
  // And the batch ids are in the message (all 8 fit in one batch).
  try {
    cxr::train(model, data.train, cfg);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("img_000") != std::string::npos);
  }
}

TEST_CASE("frozen backbone parameters hold bitwise through a training run") {
  const auto data = make_mini("frozen", 8, 2, 41);
  const auto out = cxrtest::scratch_dir("trainer_frozen_out");
  auto model = cxr::build_model(tiny_spec(43, "up_to_boundary"));

  std::vector<std::pair<std::string, std::vector<float>>> before;
  for (auto& [name, p] : model.named_params())
    if (name.rfind("features.", 0) == 0)
      before.emplace_back(
          name, std::vector<float>(p->value.data(),
                                   p->value.data() + p->value.numel()));
  REQUIRE(!before.empty());

  auto cfg = tiny_cfg(out.string(), 2, 41);
  cfg.checkpoint_every_epochs = 2;
  cxr::train(model, data.train, cfg);

  auto params = model.named_params();
  for (const auto& [name, vals] : before) {
    for (auto& [pname, p] : params) {
      if (pname != name) continue;
      CAPTURE(pname);
      CHECK(std::memcmp(p->value.data(), vals.data(),
                        sizeof(float) * vals.size()) == 0);
    }
  }
  // ...while the head did move.
  bool head_changed = false;
  auto fresh = cxr::build_model(tiny_spec(43, "up_to_boundary"));
  auto fresh_params = fresh.named_params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].first.rfind("classifier.", 0) != 0) continue;
    if (std::memcmp(params[i].second->value.data(),
                    fresh_params[i].second->value.data(),
                    sizeof(float) * static_cast<std::size_t>(
                        params[i].second->value.numel())) != 0)
      head_changed = true;
  }
  CHECK(head_changed);
}

TEST_CASE("the mean loss trends down on a learnable pattern set") {
  const auto data = make_mini("trend", 16, 4, 47);
  const auto out = cxrtest::scratch_dir("trainer_trend_out");
  auto model = cxr::build_model(tiny_spec(53));

  auto cfg = tiny_cfg(out.string(), 5, 47);
  cfg.base_lr = 1e-3;
  cfg.lr_step_epochs = 100;       // flat lr: this probes learning, not decay
  cfg.checkpoint_every_epochs = 5;
  const auto hist = cxr::train(model, data.train, cfg);

  REQUIRE(hist.epochs.size() == 5);
  const double first = hist.epochs.front().mean_train_loss;
  const double last = hist.epochs.back().mean_train_loss;
  CHECK(last < first);
  CHECK(last < 0.9 * first);  // a real trend, not noise
}

TEST_CASE("training rejects an empty split and a vocabulary-size mismatch") {
  const auto data = make_mini("reject", 8, 2, 59);
  const auto out = cxrtest::scratch_dir("trainer_reject_out");
  const auto cfg = tiny_cfg(out.string(), 1, 59);

  auto model = cxr::build_model(tiny_spec(61));
  DatasetSplit empty = data.train;
  empty.records.clear();
  CHECK_THROWS_AS(cxr::train(model, empty, cfg), ValidationError);

  auto spec5 = tiny_spec(61);
  spec5.num_classes = 5;  // vocabulary has 3
  auto model5 = cxr::build_model(spec5);
  CHECK_THROWS_AS(cxr::train(model5, data.train, cfg), ValidationError);
}

TEST_SUITE_END();
