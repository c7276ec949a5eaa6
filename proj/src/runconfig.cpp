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

#include "cxr/runconfig.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>

#include <fmt/format.h>

#include "cxr/common.hpp"

namespace cxr {

namespace {

namespace fs = std::filesystem;
using toml::Table;

/// One row per key: how to read it from a table and how to write it back.
/// A single registry keeps to_table and apply_table incapable of drifting
/// apart (a key added to one is automatically handled by the other).
struct Binding {
  std::function<void(RunConfig&, const Table&, const std::string&)> read;
  std::function<void(const RunConfig&, Table&, const std::string&)> write;
};

Binding bind_str(std::string RunConfig::* field) {
  return {[field](RunConfig& c, const Table& t, const std::string& k) {
            c.*field = t.get_str(k, c.*field);
          },
          [field](const RunConfig& c, Table& t, const std::string& k) {
            t.set(k, c.*field);
          }};
}

Binding bind_double(double RunConfig::* field) {
  return {[field](RunConfig& c, const Table& t, const std::string& k) {
            c.*field = t.get_double(k, c.*field);
          },
          [field](const RunConfig& c, Table& t, const std::string& k) {
            t.set(k, c.*field);
          }};
}

Binding bind_int(int RunConfig::* field) {
  return {[field](RunConfig& c, const Table& t, const std::string& k) {
            c.*field = static_cast<int>(
                t.get_int(k, static_cast<std::int64_t>(c.*field)));
          },
          [field](const RunConfig& c, Table& t, const std::string& k) {
            t.set(k, static_cast<std::int64_t>(c.*field));
          }};
}

Binding bind_i64(std::int64_t RunConfig::* field) {
  return {[field](RunConfig& c, const Table& t, const std::string& k) {
            c.*field = t.get_int(k, c.*field);
          },
          [field](const RunConfig& c, Table& t, const std::string& k) {
            t.set(k, c.*field);
          }};
}

Binding bind_u64(std::uint64_t RunConfig::* field) {
  return {[field](RunConfig& c, const Table& t, const std::string& k) {
            const std::int64_t v =
                t.get_int(k, static_cast<std::int64_t>(c.*field));
            if (v < 0)
              throw ValidationError(
                  fmt::format("{} must be >= 0, got {}", k, v));
            c.*field = static_cast<std::uint64_t>(v);
          },
          [field](const RunConfig& c, Table& t, const std::string& k) {
            t.set(k, static_cast<std::int64_t>(c.*field));
          }};
}

Binding bind_bool(bool RunConfig::* field) {
  return {[field](RunConfig& c, const Table& t, const std::string& k) {
            c.*field = t.get_bool(k, c.*field);
          },
          [field](const RunConfig& c, Table& t, const std::string& k) {
            t.set(k, c.*field);
          }};
}

const std::map<std::string, Binding>& bindings() {
  static const std::map<std::string, Binding> map = {
      {"data.image_root", bind_str(&RunConfig::image_root)},
      {"data.manifest", bind_str(&RunConfig::manifest)},
      {"data.train_list", bind_str(&RunConfig::train_list)},
      {"data.test_list", bind_str(&RunConfig::test_list)},
      {"data.vocab_file", bind_str(&RunConfig::vocab_file)},
      {"data.train_split", bind_str(&RunConfig::train_split)},
      {"data.test_split", bind_str(&RunConfig::test_split)},
      {"data.fraction", bind_double(&RunConfig::fraction)},
      {"data.subset_seed", bind_u64(&RunConfig::subset_seed)},
      {"model.arch", bind_str(&RunConfig::arch)},
      {"model.pretrained", bind_bool(&RunConfig::pretrained)},
      {"model.freeze_policy", bind_str(&RunConfig::freeze_policy)},
      {"model.input_size", bind_i64(&RunConfig::input_size)},
      {"model.weights_dir", bind_str(&RunConfig::weights_dir)},
      {"train.epochs", bind_int(&RunConfig::epochs)},
      {"train.batch_train", bind_int(&RunConfig::batch_train)},
      {"train.batch_eval", bind_int(&RunConfig::batch_eval)},
      {"train.base_lr", bind_double(&RunConfig::base_lr)},
      {"train.lr_step_epochs", bind_int(&RunConfig::lr_step_epochs)},
      {"train.lr_factor", bind_double(&RunConfig::lr_factor)},
      {"train.optimizer", bind_str(&RunConfig::optimizer)},
      {"train.seed", bind_u64(&RunConfig::seed)},
      {"train.checkpoint_every_epochs",
       bind_int(&RunConfig::checkpoint_every_epochs)},
      {"train.cache_images", bind_bool(&RunConfig::cache_images)},
      {"loss.kind", bind_str(&RunConfig::loss_kind)},
      {"loss.gamma", bind_double(&RunConfig::gamma)},
      {"loss.alpha", bind_double(&RunConfig::alpha)},
      {"loss.balance_negatives", bind_bool(&RunConfig::balance_negatives)},
      {"eval.threshold", bind_double(&RunConfig::threshold)},
      {"output.dir", bind_str(&RunConfig::output_dir)},
  };
  return map;
}

std::string known_keys_csv() {
  std::string out;
  for (const auto& [key, _] : bindings()) out += (out.empty() ? "" : ", ") + key;
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ValidationError(fmt::format(
        "data.fraction must be in (0, 1], got {}", fraction));
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ValidationError(fmt::format(
        "eval.threshold must be in (0, 1), got {}", threshold));
  if (input_size < 0)
    throw ValidationError(fmt::format(
        "model.input_size must be >= 0 (0 = architecture default), got {}",
        input_size));
  if (loss_kind != "bce" && loss_kind != "focal")
    throw ValidationError(fmt::format(
        "loss.kind must be 'bce' or 'focal', got '{}'", loss_kind));
  if (arch.empty()) throw ValidationError("model.arch must not be empty");
  if (output_dir.empty()) throw ValidationError("output.dir must not be empty");
}

Table to_table(const RunConfig& cfg) {
  Table t;
  for (const auto& [key, binding] : bindings()) binding.write(cfg, t, key);
  return t;
}

void apply_table(RunConfig& cfg, const Table& table) {
  const auto& known = bindings();
  for (const auto& [key, _] : table.entries())
    if (known.find(key) == known.end())
      throw ValidationError(fmt::format(
          "unknown config key '{}'; known keys: {}", key, known_keys_csv()));
  for (const auto& [key, binding] : known) binding.read(cfg, table, key);
}

RunConfig resolve_config(const std::string& config_path,
                         const Table& overrides) {
  RunConfig cfg;
  if (!config_path.empty()) apply_table(cfg, Table::parse_file(config_path));
  apply_table(cfg, overrides);
  cfg.validate();
  return cfg;
}

std::uint64_t config_fingerprint(const RunConfig& cfg) {
  return fnv1a(toml::serialize(to_table(cfg)));
}

std::string write_resolved_config(const RunConfig& cfg,
                                  const std::string& dir) {
  fs::create_directories(dir);
  const std::string path = (fs::path(dir) / "run_config.toml").string();
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw FileError(fmt::format("cannot write resolved config {}", path));
  out << toml::serialize(to_table(cfg));
  return path;
}

TrainConfig to_train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.epochs;
  t.batch_train = cfg.batch_train;
  t.batch_eval = cfg.batch_eval;
  t.base_lr = cfg.base_lr;
  t.lr_step_epochs = cfg.lr_step_epochs;
  t.lr_factor = cfg.lr_factor;
  t.optimizer = cfg.optimizer;
  t.loss.kind = cfg.loss_kind;
  t.loss.focal.gamma = cfg.gamma;
  t.loss.focal.alpha = cfg.alpha;
  t.loss.focal.balance_negatives = cfg.balance_negatives;
  t.seed = cfg.seed;
  t.checkpoint_every_epochs = cfg.checkpoint_every_epochs;
  t.out_dir = cfg.output_dir;
  t.config_hash = config_fingerprint(cfg);
  t.cache_images = cfg.cache_images;
  return t;
}

ModelSpec to_model_spec(const RunConfig& cfg, std::int64_t num_classes) {
  ModelSpec spec;
  spec.arch = cfg.arch;
  spec.num_classes = num_classes;
  spec.pretrained = cfg.pretrained;
  spec.freeze_policy = cfg.freeze_policy;
  spec.seed = cfg.seed;
  spec.input_size = cfg.input_size;
  spec.weights_dir = cfg.weights_dir;
  return spec;
}

}  // namespace cxr
