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
// The resolved run configuration: one flat struct covering data paths, model
// choice, training hyperparameters, loss settings and evaluation threshold,
// with a TOML round trip. Resolution layers three sources, strongest last:
// built-in defaults, then a config file, then command-line overrides. Every
// command writes the fully resolved copy into its output directory, so any
// artifact can be traced to the exact settings that produced it.

#pragma once

#include <cstdint>
#include <string>

#include "cxr/models.hpp"
#include "cxr/tomlite.hpp"
#include "cxr/trainer.hpp"

namespace cxr {

struct RunConfig {
  // [data] — raw corpus inputs and the normalized split manifests.
  std::string image_root;
  std::string manifest;
  std::string train_list;
  std::string test_list;
  std::string vocab_file;
  std::string train_split;  // normalized JSON manifest (prepare output)
  std::string test_split;
  double fraction = 1.0;  // mini-subset fraction; 1.0 = full split
  std::uint64_t subset_seed = 0;

  // [model]
  std::string arch = "resnet152";
  bool pretrained = false;
  std::string freeze_policy = "up_to_boundary";
  std::int64_t input_size = 0;  // 0 = architecture default
  std::string weights_dir;      // "" = environment / built-in default

  // [train]
  int epochs = 20;
  int batch_train = 64;
  int batch_eval = 32;
  double base_lr = 1e-4;
  int lr_step_epochs = 5;
  double lr_factor = 0.1;
  std::string optimizer = "adam";
  std::uint64_t seed = 42;
  int checkpoint_every_epochs = 1;
  bool cache_images = true;

  // [loss]
  std::string loss_kind = "focal";
  double gamma = 2.0;
  double alpha = 0.25;
  bool balance_negatives = false;

  // [eval]
  double threshold = 0.5;

  // [output]
  std::string output_dir = "runs/run";

  /// Checks the fields this struct owns (fraction, threshold, input_size,
  /// loss kind). Training-parameter validation stays with TrainConfig.
  void validate() const;
};

/// Every field, always — the table is the self-describing provenance record.
toml::Table to_table(const RunConfig& cfg);

/// Applies `table` on top of `cfg`. Keys absent from the table keep their
/// current values; a key outside the known set is a ValidationError naming
/// the known keys, so typos cannot silently fall back to defaults.
void apply_table(RunConfig& cfg, const toml::Table& table);

/// defaults -> config file (optional, "" skips) -> overrides; validates the
/// result. `overrides` is how command-line flags win over the file.
RunConfig resolve_config(const std::string& config_path,
                         const toml::Table& overrides);

/// FNV-1a of the serialized table. Stable across runs and key order; stamped
/// into checkpoints so resumed work can prove it used the same settings.
std::uint64_t config_fingerprint(const RunConfig& cfg);

/// Serializes the resolved config to `<dir>/run_config.toml`; returns the
/// path. Creates the directory if needed.
std::string write_resolved_config(const RunConfig& cfg,
                                  const std::string& dir);

/// TrainConfig with loss spec, output dir and fingerprint filled in.
TrainConfig to_train_config(const RunConfig& cfg);

/// ModelSpec for `num_classes` outputs (class count comes from the
/// vocabulary, which the config only points at).
ModelSpec to_model_spec(const RunConfig& cfg, std::int64_t num_classes);

}  // namespace cxr
