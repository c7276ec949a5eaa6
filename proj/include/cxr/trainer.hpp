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
// The fine-tuning loop: Adam over the trainable parameters, step-decayed
// learning rate, per-epoch checkpoints and a JSON-lines loss history. Every
// random choice (shuffle order, augmentation, dropout masks) is a pure
// function of (seed, epoch, position), so a run is reproducible and a resumed
// run continues the exact stream a straight-through run would have used.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/losses.hpp"
#include "cxr/models.hpp"

namespace cxr {

struct TrainConfig {
  int epochs = 20;
  int batch_train = 64;
  int batch_eval = 32;  // carried in the run config; evaluation reads it
  double base_lr = 1e-4;
  int lr_step_epochs = 5;
  double lr_factor = 0.1;
  std::string optimizer = "adam";
  LossSpec loss;  // kind "bce" | "focal" plus focal parameters
  std::uint64_t seed = 0;
  std::string device = "cpu";  // descriptive tag; this toolkit runs on CPU
  int checkpoint_every_epochs = 1;
  /// Receives checkpoints/, history.jsonl and loss_curve.png.
  std::string out_dir = "runs/default";
  /// Fingerprint of the resolved run configuration, stamped into sidecars.
  std::uint64_t config_hash = 0;
  /// Keep decoded images in memory across epochs (datasets here are small).
  bool cache_images = true;

  void validate() const;
};

/// base_lr * lr_factor^floor(epoch / lr_step_epochs) — the published step
/// schedule, exact in double.
double lr_at(int epoch, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double mean_train_loss = 0.0;
  double lr = 0.0;
  double wall_time_sec = 0.0;
  std::string checkpoint_dir;  // empty when this epoch saved no checkpoint
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;  // the epochs run by THIS call
  std::string final_checkpoint;
};

/// Runs cfg.epochs from scratch on `model`. Checkpoints land under
/// cfg.out_dir/checkpoints/, history under cfg.out_dir/history.jsonl (fresh
/// file), and the loss curve is rendered once at the end. Aborts with
/// NumericalError (naming the step and batch ids) on a non-finite loss.
TrainHistory train(ClassifierModel& model, const DatasetSplit& split,
                   const TrainConfig& cfg);

struct ResumeResult {
  ClassifierModel model;
  TrainHistory history;
};

/// Rebuilds the model and optimizer from a checkpoint directory and continues
/// to cfg.epochs. Refuses a sidecar whose vocabulary, class count or seed
/// disagrees with the resumed run, naming the differing field. History is
/// appended to cfg.out_dir/history.jsonl.
ResumeResult resume(const std::string& checkpoint_dir,
                    const DatasetSplit& split, const TrainConfig& cfg);

/// One epoch record per line, as written to history.jsonl.
std::string history_record_json(const EpochRecord& rec);
std::vector<EpochRecord> load_history_jsonl(const std::string& path);

/// Loss-over-epochs line plot (PNG). Renders whatever records it is given;
/// callers pass the full history so resumed runs chart their whole past.
void render_loss_curve(const std::vector<EpochRecord>& records,
                       const std::string& path);

}  // namespace cxr
