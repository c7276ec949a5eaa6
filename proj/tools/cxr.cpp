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
// Operator-facing command line: prepare -> train -> evaluate -> explain,
// plus export-backbone for seeding the pretrained-weight store. Commands
// coordinate only through files; each writes the fully resolved config it
// ran with into its output directory. Exit codes: 0 success, 2 usage or
// validation failure, 3 numerical failure during training.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "CLI11.hpp"
#include "cxr/common.hpp"
#include "cxr/dataset.hpp"
#include "cxr/evaluate.hpp"
#include "cxr/gradcam.hpp"
#include "cxr/models.hpp"
#include "cxr/preprocess.hpp"
#include "cxr/runconfig.hpp"
#include "cxr/tomlite.hpp"
#include "cxr/trainer.hpp"

namespace fs = std::filesystem;
using cxr::RunConfig;

namespace {

/// Binds CLI flags to run-config keys: a flag writes its key into the
/// overrides table only when actually passed, so resolution keeps the
/// flags > config file > defaults order without sentinel values.
struct ConfigFlags {
  CLI::App* cmd;
  std::string config_file;
  cxr::toml::Table overrides;

  explicit ConfigFlags(CLI::App* c) : cmd(c) {
    cmd->add_option("--config", config_file,
                    "TOML config file (flags override its values)");
  }

  void str(const std::string& flag, const std::string& key,
           const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { overrides.set(key, v); },
        desc);
  }
  void integer(const std::string& flag, const std::string& key,
               const std::string& desc) {
    cmd->add_option_function<std::int64_t>(
        flag, [this, key](std::int64_t v) { overrides.set(key, v); }, desc);
  }
  void real(const std::string& flag, const std::string& key,
            const std::string& desc) {
    cmd->add_option_function<double>(
        flag, [this, key](double v) { overrides.set(key, v); }, desc);
  }
  void toggle(const std::string& flag, const std::string& key, bool value,
              const std::string& desc) {
    cmd->add_flag_function(
        flag,
        [this, key, value](std::int64_t count) {
          if (count > 0) overrides.set(key, value);
        },
        desc);
  }

  RunConfig resolve() const {
    return cxr::resolve_config(config_file, overrides);
  }
};

void require_key(const std::string& value, const std::string& key,
                 const std::string& flag) {
  if (value.empty())
    throw cxr::ValidationError(
        fmt::format("{} is required (flag {} or config key {})",
                    key, flag, key));
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path))
    throw cxr::FileError(fmt::format("{} not found: {}", what, path));
}

std::string path_leaf(const std::string& dir) {
  fs::path p(dir);
  if (p.has_filename()) return p.filename().string();
  return p.parent_path().filename().string();  // trailing slash
}

std::string sanitize_token(std::string s) {
  for (char& c : s)
    if (c == '/' || c == '\\' || c == ':' || c == ' ' || c == '\t') c = '_';
  return s;
}

// ---- prepare ----------------------------------------------------------------

int cmd_prepare(const ConfigFlags& flags) {
  RunConfig cfg = flags.resolve();
  require_key(cfg.manifest, "data.manifest", "--manifest");
  require_key(cfg.image_root, "data.image_root", "--image-root");
  require_key(cfg.train_list, "data.train_list", "--train-list");
  require_key(cfg.test_list, "data.test_list", "--test-list");
  require_key(cfg.vocab_file, "data.vocab_file", "--vocab");
  require_file(cfg.manifest, "label manifest");
  require_file(cfg.image_root, "image root");
  require_file(cfg.train_list, "train list");
  require_file(cfg.test_list, "test list");
  require_file(cfg.vocab_file, "vocabulary file");

  cxr::IngestReport report;
  auto records =
      cxr::parse_label_manifest(cfg.manifest, cfg.image_root, &report);
  const auto vocab = cxr::LabelVocabulary::from_file(cfg.vocab_file);
  auto [train, test] = cxr::build_splits(records, vocab, cfg.train_list,
                                         cfg.test_list, &report);

  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);
  cfg.train_split = (out / "train.json").string();
  cfg.test_split = (out / "test.json").string();
  cxr::save_split_json(train, cfg.train_split);
  cxr::save_split_json(test, cfg.test_split);
  fmt::print("train split: {} records -> {}\n", train.records.size(),
             cfg.train_split);
  fmt::print("test split:  {} records -> {}\n", test.records.size(),
             cfg.test_split);

  if (cfg.fraction < 1.0) {
    const auto train_mini =
        cxr::make_subset(train, cfg.fraction, cfg.subset_seed);
    const auto test_mini = cxr::make_subset(test, cfg.fraction, cfg.subset_seed);
    const std::string tm = (out / "train_mini.json").string();
    const std::string sm = (out / "test_mini.json").string();
    cxr::save_split_json(train_mini, tm);
    cxr::save_split_json(test_mini, sm);
    fmt::print("mini splits ({:g} of each, seed {}): {} records -> {}, "
               "{} records -> {}\n",
               cfg.fraction, cfg.subset_seed, train_mini.records.size(), tm,
               test_mini.records.size(), sm);
  }

  if (!report.missing_files.empty())
    fmt::print("warning: {} manifest rows have no image file on disk\n",
               report.missing_files.size());
  if (report.records_in_no_list > 0)
    fmt::print("note: {} manifest rows matched neither split list\n",
               report.records_in_no_list);
  if (report.list_ids_without_row > 0)
    fmt::print("warning: {} listed ids are absent from the manifest\n",
               report.list_ids_without_row);

  fmt::print("\nclass frequencies ({}):\n{}\n", train.name,
             cxr::class_frequency_table(train));
  fmt::print("\nclass frequencies ({}):\n{}\n", test.name,
             cxr::class_frequency_table(test));

  cxr::write_resolved_config(cfg, cfg.output_dir);
  return 0;
}

// ---- train --------------------------------------------------------------------

int cmd_train(const ConfigFlags& flags, const std::string& resume_from) {
  RunConfig cfg = flags.resolve();
  require_key(cfg.train_split, "data.train_split", "--data");
  require_file(cfg.train_split, "training split manifest");

  const auto split = cxr::load_split_json(cfg.train_split);
  const auto mspec =
      cxr::to_model_spec(cfg, static_cast<std::int64_t>(split.vocab.size()));
  const auto tcfg = cxr::to_train_config(cfg);
  tcfg.validate();
  // Provenance goes down first so an aborted run still documents itself.
  cxr::write_resolved_config(cfg, cfg.output_dir);

  cxr::TrainHistory history;
  try {
    if (resume_from.empty()) {
      auto model = cxr::build_model(mspec);
      history = cxr::train(model, split, tcfg);
    } else {
      auto result = cxr::resume(resume_from, split, tcfg);
      history = std::move(result.history);
    }
  } catch (const cxr::NumericalError& e) {
    const std::string diag =
        (fs::path(cfg.output_dir) / "diagnostics.txt").string();
    std::ofstream out(diag, std::ios::trunc);
    out << e.what() << "\n\nresolved configuration:\n"
        << cxr::toml::serialize(cxr::to_table(cfg));
    fmt::print(stderr, "numerical failure: {}\ndiagnostics: {}\n", e.what(),
               diag);
    throw;
  }

  for (const auto& rec : history.epochs)
    fmt::print("epoch {:>3}  loss {:.6f}  lr {:g}  {:.1f}s{}\n", rec.epoch,
               rec.mean_train_loss, rec.lr, rec.wall_time_sec,
               rec.checkpoint_dir.empty() ? ""
                                          : "  -> " + rec.checkpoint_dir);
  fmt::print("final checkpoint: {}\n", history.final_checkpoint);
  fmt::print("history: {}\n",
             (fs::path(cfg.output_dir) / "history.jsonl").string());
  return 0;
}

// ---- evaluate -------------------------------------------------------------------

int cmd_evaluate(const ConfigFlags& flags,
                 const std::vector<std::string>& checkpoints,
                 bool random_baseline, bool per_class) {
  RunConfig cfg = flags.resolve();
  require_key(cfg.test_split, "data.test_split", "--data");
  require_file(cfg.test_split, "evaluation split manifest");
  if (checkpoints.empty() && !random_baseline)
    throw cxr::ValidationError(
        "nothing to evaluate: pass --checkpoint and/or "
        "--no-pretrained-baseline");

  const auto split = cxr::load_split_json(cfg.test_split);
  cxr::EvalPassOptions opt;
  opt.batch = cfg.batch_eval;
  opt.threshold = cfg.threshold;
  opt.focal.gamma = cfg.gamma;
  opt.focal.alpha = cfg.alpha;
  opt.focal.balance_negatives = cfg.balance_negatives;

  std::vector<cxr::EvalReport> reports;
  // Baseline rows mirror the first checkpoint's geometry so the comparison
  // isolates the weights; with no checkpoint the run config describes it.
  cxr::ModelSpec baseline_spec =
      cxr::to_model_spec(cfg, static_cast<std::int64_t>(split.vocab.size()));
  baseline_spec.pretrained = false;

  for (const auto& dir : checkpoints) {
    require_file(dir, "checkpoint directory");
    auto loaded = cxr::load_checkpoint(dir);
    if (loaded.meta.vocabulary != split.vocab.classes())
      throw cxr::ValidationError(fmt::format(
          "checkpoint {} was trained on vocabulary [{}] but the split uses "
          "[{}]",
          dir, fmt::join(loaded.meta.vocabulary, ", "),
          fmt::join(split.vocab.classes(), ", ")));
    const std::string name =
        fmt::format("{}:{}", loaded.meta.arch, path_leaf(dir));
    reports.push_back(cxr::evaluate_model(loaded.model, split, opt, name));
    baseline_spec.arch = loaded.meta.arch;
    baseline_spec.input_size = loaded.meta.input_size;
    baseline_spec.seed = loaded.meta.seed;
  }

  if (random_baseline) {
    auto model = cxr::build_model(baseline_spec);
    const std::string name =
        fmt::format("{}:random-init", baseline_spec.arch);
    reports.push_back(cxr::evaluate_model(model, split, opt, name));
  }

  fs::create_directories(cfg.output_dir);
  const std::string table = cxr::render_metrics_table(reports);
  fmt::print("{}\n", table);
  const std::string table_path =
      (fs::path(cfg.output_dir) / "metrics_table.txt").string();
  std::ofstream tout(table_path, std::ios::trunc);
  tout << table << "\n";

  for (const auto& report : reports) {
    const std::string file = fmt::format(
        "report_{}.json", sanitize_token(report.model_name));
    cxr::save_report_json(report,
                          (fs::path(cfg.output_dir) / file).string());
    if (per_class)
      fmt::print("\n{}\n", cxr::render_per_class_table(report));
  }
  fmt::print("table: {}\n", table_path);

  cxr::write_resolved_config(cfg, cfg.output_dir);
  return 0;
}

// ---- explain ------------------------------------------------------------------

int cmd_explain(const ConfigFlags& flags, const std::string& image,
                const std::string& checkpoint, const std::string& target,
                const std::string& layer, bool sweep, double opacity) {
  RunConfig cfg = flags.resolve();
  require_file(image, "input image");
  require_file(checkpoint, "checkpoint directory");

  auto loaded = cxr::load_checkpoint(checkpoint);
  const cxr::LabelVocabulary vocab(loaded.meta.vocabulary);
  int class_index = -1;
  for (std::size_t i = 0; i < vocab.classes().size(); ++i)
    if (vocab.classes()[i] == target) class_index = static_cast<int>(i);
  if (class_index < 0)
    throw cxr::ValidationError(fmt::format(
        "class '{}' is not in the checkpoint vocabulary: {}", target,
        fmt::join(vocab.classes(), ", ")));

  const cxr::Tensor input =
      cxr::load_and_standardize(image, loaded.model.profile());
  const std::uint64_t checksum = loaded.model.parameter_checksum();
  const std::string image_id = fs::path(image).filename().string();
  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);

  auto emit = [&](const cxr::Heatmap& hm, const std::string& layer_token) {
    const std::string png = cxr::cam_output_name(image_id, target, layer_token);
    const std::string sidecar =
        png.substr(0, png.size() - 4) + ".json";  // .png -> .json
    cxr::write_overlay_png(hm, image, opacity, (out / png).string());
    cxr::write_cam_sidecar(hm, target, checksum, (out / sidecar).string());
    fmt::print("{}  (layer {}, grid {}x{}{})\n", (out / png).string(),
               hm.source_layer, hm.grid_h, hm.grid_w,
               hm.zero_map ? ", zero map" : "");
  };

  if (sweep) {
    const cxr::CamSweep maps =
        cxr::layer_sweep(loaded.model, input, class_index);
    emit(maps.early, "early");
    emit(maps.middle, "middle");
    emit(maps.final, "final");
    const std::string panel = cxr::panel_output_name(image_id, target);
    cxr::write_panel_png(maps, image, opacity, (out / panel).string());
    fmt::print("{}  (three-depth panel)\n", (out / panel).string());
  } else {
    const cxr::Heatmap hm =
        cxr::compute_cam(loaded.model, input, class_index, layer);
    emit(hm, layer);
  }

  cxr::write_resolved_config(cfg, cfg.output_dir);
  return 0;
}

// ---- export-backbone ------------------------------------------------------------

int cmd_export_backbone(const ConfigFlags& flags,
                        const std::string& checkpoint) {
  RunConfig cfg = flags.resolve();
  require_file(checkpoint, "checkpoint directory");
  auto loaded = cxr::load_checkpoint(checkpoint);
  cxr::ModelSpec spec = loaded.model.spec();
  if (!cfg.weights_dir.empty()) spec.weights_dir = cfg.weights_dir;
  const std::string path = cxr::backbone_store_path(spec);
  cxr::export_backbone(loaded.model, path);
  fmt::print("backbone weights for {} -> {}\n", spec.arch, path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  int rc = 0;
  CLI::App app{
      "multi-label chest radiograph toolkit: prepare -> train -> evaluate "
      "-> explain"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand(
      "prepare", "normalize the corpus into split manifests");
  ConfigFlags pf(prepare);
  pf.str("--manifest", "data.manifest", "label CSV (image id + findings)");
  pf.str("--image-root", "data.image_root", "directory with the images");
  pf.str("--train-list", "data.train_list", "file of training image ids");
  pf.str("--test-list", "data.test_list", "file of test image ids");
  pf.str("--vocab", "data.vocab_file", "file of class names, one per line");
  pf.real("--fraction", "data.fraction",
          "also write mini subsets with this fraction of records");
  pf.integer("--seed", "data.subset_seed", "subset sampling seed");
  pf.str("--out", "output.dir", "output directory");
  prepare->callback([&] { rc = cmd_prepare(pf); });

  // train
  auto* train = app.add_subcommand("train", "fine-tune a classifier");
  ConfigFlags tf(train);
  tf.str("--data", "data.train_split", "training split manifest (JSON)");
  tf.str("--arch", "model.arch", "alexnet | resnet152 | inception_v3");
  tf.toggle("--pretrained", "model.pretrained", true,
            "initialize the backbone from the weight store");
  tf.toggle("--no-pretrained", "model.pretrained", false,
            "random backbone initialization");
  tf.str("--freeze", "model.freeze_policy", "none | up_to_boundary | all");
  tf.integer("--input-size", "model.input_size",
             "input resolution (0 = architecture default)");
  tf.str("--weights-dir", "model.weights_dir",
         "pretrained-weight store directory");
  tf.integer("--epochs", "train.epochs", "training epochs");
  tf.integer("--batch-train", "train.batch_train", "training batch size");
  tf.integer("--batch-eval", "train.batch_eval", "evaluation batch size");
  tf.real("--lr", "train.base_lr", "initial learning rate");
  tf.integer("--lr-step", "train.lr_step_epochs",
             "epochs between learning-rate decays");
  tf.real("--lr-factor", "train.lr_factor", "learning-rate decay factor");
  tf.integer("--seed", "train.seed", "run seed");
  tf.integer("--checkpoint-every", "train.checkpoint_every_epochs",
             "epochs between checkpoints");
  tf.toggle("--no-cache", "train.cache_images", false,
            "decode images every epoch instead of caching");
  tf.str("--loss", "loss.kind", "bce | focal");
  tf.real("--gamma", "loss.gamma", "focal focusing exponent");
  tf.real("--alpha", "loss.alpha", "focal positive-class weight");
  tf.str("--out", "output.dir", "output directory");
  std::string resume_from;
  train->add_option("--resume-from", resume_from,
                    "continue from this checkpoint directory");
  train->callback([&] { rc = cmd_train(tf, resume_from); });

  // evaluate
  auto* evaluate = app.add_subcommand(
      "evaluate", "score checkpoints on a split and print the metrics table");
  ConfigFlags ef(evaluate);
  ef.str("--data", "data.test_split", "evaluation split manifest (JSON)");
  ef.real("--threshold", "eval.threshold", "decision threshold for F1");
  ef.integer("--batch", "train.batch_eval", "evaluation batch size");
  ef.str("--arch", "model.arch", "architecture for a standalone baseline");
  ef.integer("--input-size", "model.input_size",
             "input resolution for a standalone baseline");
  ef.integer("--seed", "train.seed", "seed for the baseline initialization");
  ef.str("--out", "output.dir", "output directory");
  std::vector<std::string> checkpoints;
  evaluate->add_option("--checkpoint", checkpoints,
                       "checkpoint directory (repeatable)");
  bool random_baseline = false;
  evaluate->add_flag("--no-pretrained-baseline", random_baseline,
                     "add a random-initialization row for comparison");
  bool per_class = false;
  evaluate->add_flag("--per-class", per_class,
                     "also print per-class F1/AUC breakdowns");
  evaluate->callback([&] {
    rc = cmd_evaluate(ef, checkpoints, random_baseline, per_class);
  });

  // explain
  auto* explain = app.add_subcommand(
      "explain", "render class-evidence heatmaps for one image");
  ConfigFlags xf(explain);
  std::string image, checkpoint, target, layer = "final";
  bool sweep = false;
  double opacity = 0.4;
  explain->add_option("image", image, "input image (PNG)")->required();
  explain->add_option("--checkpoint", checkpoint, "checkpoint directory")
      ->required();
  explain->add_option("--class", target, "target class name")->required();
  explain->add_option("--layer", layer,
                      "early | middle | final, or an explicit layer name");
  explain->add_flag("--sweep", sweep,
                    "render all three depths plus a comparison panel");
  explain->add_option("--opacity", opacity, "heatmap opacity in [0, 1]");
  xf.str("--out", "output.dir", "output directory");
  explain->callback([&] {
    rc = cmd_explain(xf, image, checkpoint, target, layer, sweep, opacity);
  });

  // export-backbone
  auto* exporter = app.add_subcommand(
      "export-backbone",
      "copy a checkpoint's backbone into the pretrained-weight store");
  ConfigFlags bf(exporter);
  std::string ck;
  exporter->add_option("--checkpoint", ck, "checkpoint directory")
      ->required();
  bf.str("--weights-dir", "model.weights_dir", "weight store directory");
  exporter->callback([&] { rc = cmd_export_backbone(bf, ck); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const cxr::NumericalError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 3;
  } catch (const cxr::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return rc;
}
