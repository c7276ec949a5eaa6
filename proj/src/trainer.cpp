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

#include "cxr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>
#include <opencv2/opencv.hpp>

#include "cxr/common.hpp"
#include "cxr/optim.hpp"
#include "cxr/preprocess.hpp"
#include "cxr/rng.hpp"
#include "json.hpp"

namespace cxr {

namespace {

namespace fs = std::filesystem;
using i64 = std::int64_t;

// Stream tags: every random draw of a run is keyed (seed, tag, epoch, ...) so
// shuffles, crops and dropout masks never collide and never depend on when
// the process started or what ran before.
constexpr std::uint64_t kShuffleTag = 0x73687566;  // shuffle order
constexpr std::uint64_t kAugTag = 0x61756774;      // per-sample augmentation
constexpr std::uint64_t kDropTag = 0x64726f70;     // per-step dropout masks

/// Decoded-and-standardized images, keyed by path. Augmentation stays outside
/// the cache: it must redraw per (epoch, sample).
class ImageCache {
 public:
  ImageCache(const ArchProfile& profile, bool enabled)
      : profile_(profile), enabled_(enabled) {}

  Tensor get(const std::string& path) {
    if (!enabled_) return load_and_standardize(path, profile_);
    auto it = cache_.find(path);
    if (it != cache_.end()) return it->second;
    Tensor t = load_and_standardize(path, profile_);
    cache_.emplace(path, t);
    return t;
  }

 private:
  const ArchProfile& profile_;
  bool enabled_;
  std::unordered_map<std::string, Tensor> cache_;
};

void append_history_line(const std::string& path, const EpochRecord& rec,
                         bool truncate) {
  std::ofstream out(path, truncate ? std::ios::trunc : std::ios::app);
  if (!out) throw FileError(fmt::format("cannot write history file {}", path));
  out << history_record_json(rec) << "\n";
}

CheckpointMeta meta_for(const ClassifierModel& model, const DatasetSplit& split,
                        const TrainConfig& cfg, int completed_epochs) {
  CheckpointMeta meta;
  meta.arch = model.spec().arch;
  meta.num_classes = model.spec().num_classes;
  meta.vocabulary = split.vocab.classes();
  meta.freeze_policy = model.spec().freeze_policy;
  meta.epoch = completed_epochs;
  meta.config_hash = cfg.config_hash;
  meta.input_size = model.profile().input_size;
  meta.seed = cfg.seed;
  return meta;
}

/// The loop body shared by train() and resume().
TrainHistory run_epochs(ClassifierModel& model, Adam& opt,
                        const DatasetSplit& split, const TrainConfig& cfg,
                        int first_epoch) {
  const i64 n = static_cast<i64>(split.records.size());
  const i64 c = static_cast<i64>(split.vocab.size());
  const i64 s = model.profile().input_size;
  const std::string history_path =
      (fs::path(cfg.out_dir) / "history.jsonl").string();
  fs::create_directories(fs::path(cfg.out_dir) / "checkpoints");

  ImageCache cache(model.profile(), cfg.cache_images);
  TrainHistory history;

  std::vector<i64> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, cfg);
    opt.set_lr(lr);

    Rng shuffle_rng(
        mix_seed({cfg.seed, kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, shuffle_rng);

    double loss_weighted = 0.0;
    i64 step = 0;
    for (i64 start = 0; start < n; start += cfg.batch_train, ++step) {
      const i64 rows = std::min<i64>(cfg.batch_train, n - start);

      Tensor x({rows, 3, s, s});
      Tensor targets({rows, c});
      for (i64 r = 0; r < rows; ++r) {
        const i64 idx = order[static_cast<std::size_t>(start + r)];
        const SampleRecord& rec = split.records[static_cast<std::size_t>(idx)];
        if (static_cast<i64>(rec.target.size()) != c)
          throw ValidationError(fmt::format(
              "sample {} has no target vector; run target attachment first",
              rec.image_id));
        const std::uint64_t aug_key =
            mix_seed({cfg.seed, kAugTag, static_cast<std::uint64_t>(epoch),
                      static_cast<std::uint64_t>(idx)});
        const Tensor img = augment(cache.get(rec.path), aug_key, Policy::kTrain);
        std::memcpy(x.data() + r * 3 * s * s, img.data(),
                    sizeof(float) * static_cast<std::size_t>(3 * s * s));
        std::memcpy(targets.data() + r * c, rec.target.data(),
                    sizeof(float) * static_cast<std::size_t>(c));
      }

      nn::Ctx ctx;
      ctx.train = true;
      ctx.need_grad = true;
      ctx.dropout_key =
          mix_seed({cfg.seed, kDropTag, static_cast<std::uint64_t>(epoch),
                    static_cast<std::uint64_t>(step)});

      const auto batch_ids = [&] {
        std::string ids;
        for (i64 r = 0; r < std::min<i64>(rows, 8); ++r) {
          const i64 idx = order[static_cast<std::size_t>(start + r)];
          ids += (r ? ", " : "") +
                 split.records[static_cast<std::size_t>(idx)].image_id;
        }
        return ids;
      };

      nn::zero_grads(model.net());
      const Tensor logits = model.forward(x, ctx);
      double loss;
      try {
        loss = cfg.loss.value(logits, targets);
      } catch (const NumericalError& e) {
        // The loss functions reject non-finite logits; add the step context.
        throw NumericalError(fmt::format(
            "training aborted at epoch {}, step {} (batch ids: {}): {}", epoch,
            step, batch_ids(), e.what()));
      }
      if (!std::isfinite(loss))
        throw NumericalError(
            fmt::format("non-finite training loss at epoch {}, step {} "
                        "(batch ids: {})",
                        epoch, step, batch_ids()));

      Tensor dlogits(logits.shape());
      cfg.loss.grad(logits, targets, dlogits);
      model.backward(dlogits);
      opt.step();

      loss_weighted += loss * static_cast<double>(rows);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_train_loss = loss_weighted / static_cast<double>(n);
    rec.lr = lr;
    rec.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      epoch_start)
            .count();

    const int completed = epoch + 1;
    const bool last = completed == cfg.epochs;
    if (completed % cfg.checkpoint_every_epochs == 0 || last) {
      rec.checkpoint_dir =
          (fs::path(cfg.out_dir) / "checkpoints" /
           fmt::format("epoch_{:03d}", completed))
              .string();
      save_checkpoint(model, rec.checkpoint_dir,
                      meta_for(model, split, cfg, completed),
                      opt.export_state());
    }
    append_history_line(history_path, rec, /*truncate=*/false);
    history.epochs.push_back(std::move(rec));
  }

  history.final_checkpoint =
      (fs::path(cfg.out_dir) / "checkpoints" / "final").string();
  save_checkpoint(model, history.final_checkpoint,
                  meta_for(model, split, cfg, cfg.epochs), opt.export_state());

  render_loss_curve(load_history_jsonl(history_path),
                    (fs::path(cfg.out_dir) / "loss_curve.png").string());
  return history;
}

void check_split(const ClassifierModel& model, const DatasetSplit& split) {
  if (split.records.empty())
    throw ValidationError(
        fmt::format("training split '{}' is empty", split.name));
  if (static_cast<int>(split.vocab.size()) != model.spec().num_classes)
    throw ValidationError(fmt::format(
        "split vocabulary has {} classes but the model head has {}",
        split.vocab.size(), model.spec().num_classes));
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train config: epochs must be >= 1");
  if (batch_train < 1 || batch_eval < 1)
    throw ValidationError("train config: batch sizes must be >= 1");
  if (!(base_lr > 0.0))
    throw ValidationError("train config: base_lr must be > 0");
  if (lr_step_epochs < 1)
    throw ValidationError("train config: lr_step_epochs must be >= 1");
  if (!(lr_factor > 0.0 && lr_factor < 1.0))
    throw ValidationError("train config: lr_factor must lie in (0, 1)");
  if (optimizer != "adam")
    throw ValidationError(fmt::format(
        "train config: unknown optimizer '{}' (available: adam)", optimizer));
  if (loss.kind != "bce" && loss.kind != "focal")
    throw ValidationError(fmt::format(
        "train config: unknown loss '{}' (available: bce, focal)", loss.kind));
  loss.focal.validate();
  if (checkpoint_every_epochs < 1)
    throw ValidationError(
        "train config: checkpoint_every_epochs must be >= 1");
  if (out_dir.empty())
    throw ValidationError("train config: out_dir must not be empty");
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ValidationError("lr_at: epoch must be >= 0");
  return cfg.base_lr * std::pow(cfg.lr_factor, epoch / cfg.lr_step_epochs);
}

TrainHistory train(ClassifierModel& model, const DatasetSplit& split,
                   const TrainConfig& cfg) {
  cfg.validate();
  check_split(model, split);

  fs::create_directories(cfg.out_dir);
  // Fresh run: truncate any previous history so the JSONL mirrors this run.
  const std::string history_path =
      (fs::path(cfg.out_dir) / "history.jsonl").string();
  std::ofstream(history_path, std::ios::trunc);

  Adam opt(model.trainable_parameters(), AdamConfig{.lr = cfg.base_lr});
  return run_epochs(model, opt, split, cfg, 0);
}

ResumeResult resume(const std::string& checkpoint_dir,
                    const DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_dir);
  check_split(loaded.model, split);

  if (loaded.meta.vocabulary != split.vocab.classes())
    throw ValidationError(fmt::format(
        "cannot resume {}: sidecar field 'vocabulary' does not match the "
        "training split",
        checkpoint_dir));
  if (loaded.meta.num_classes != static_cast<int>(split.vocab.size()))
    throw ValidationError(fmt::format(
        "cannot resume {}: sidecar field 'num_classes' is {} but the split "
        "has {} classes",
        checkpoint_dir, loaded.meta.num_classes, split.vocab.size()));
  if (loaded.meta.seed != cfg.seed)
    throw ValidationError(fmt::format(
        "cannot resume {}: sidecar field 'seed' is {} but the run config says "
        "{} — resuming would change the data order mid-run",
        checkpoint_dir, loaded.meta.seed, cfg.seed));
  if (loaded.meta.epoch >= cfg.epochs)
    throw ValidationError(fmt::format(
        "cannot resume {}: checkpoint already covers {} epochs and the run "
        "config asks for {}",
        checkpoint_dir, loaded.meta.epoch, cfg.epochs));

  Adam opt(loaded.model.trainable_parameters(), AdamConfig{.lr = cfg.base_lr});
  opt.import_state(loaded.extra);

  fs::create_directories(cfg.out_dir);
  ResumeResult result{std::move(loaded.model), {}};
  result.history = run_epochs(result.model, opt, split, cfg, loaded.meta.epoch);
  return result;
}

std::string history_record_json(const EpochRecord& rec) {
  nlohmann::json j;
  j["epoch"] = rec.epoch;
  j["mean_train_loss"] = rec.mean_train_loss;
  j["lr"] = rec.lr;
  j["wall_time_sec"] = rec.wall_time_sec;
  j["checkpoint"] = rec.checkpoint_dir;
  return j.dump();
}

std::vector<EpochRecord> load_history_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError(fmt::format("cannot read history file {}", path));
  std::vector<EpochRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      EpochRecord rec;
      rec.epoch = j.at("epoch").get<int>();
      rec.mean_train_loss = j.at("mean_train_loss").get<double>();
      rec.lr = j.at("lr").get<double>();
      rec.wall_time_sec = j.at("wall_time_sec").get<double>();
      rec.checkpoint_dir = j.value("checkpoint", std::string());
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(
          fmt::format("bad history line {} in {}: {}", line_no, path, e.what()));
    }
  }
  return out;
}

void render_loss_curve(const std::vector<EpochRecord>& records,
                       const std::string& path) {
  if (records.empty())
    throw ValidationError("loss curve: no epoch records to render");

  const int w = 900, h = 540;
  const int ml = 80, mr = 30, mt = 50, mb = 60;  // margins
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));

  double lo = records[0].mean_train_loss, hi = lo;
  for (const auto& r : records) {
    lo = std::min(lo, r.mean_train_loss);
    hi = std::max(hi, r.mean_train_loss);
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;  // flat line still renders
  const double pad = 0.05 * (hi - lo);
  lo -= pad, hi += pad;

  const int min_epoch = records.front().epoch;
  const int max_epoch = records.back().epoch;
  const double span = std::max(1, max_epoch - min_epoch);

  const auto px = [&](int epoch) {
    return ml + static_cast<int>((w - ml - mr) * (epoch - min_epoch) / span);
  };
  const auto py = [&](double loss) {
    return mt + static_cast<int>((h - mt - mb) * (hi - loss) / (hi - lo));
  };

  const cv::Scalar axis(60, 60, 60), curve(180, 90, 20), grid(230, 230, 230);
  // Horizontal gridlines with loss labels.
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const int y = py(v);
    cv::line(img, {ml, y}, {w - mr, y}, grid, 1);
    cv::putText(img, fmt::format("{:.4f}", v), {8, y + 4},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1, cv::LINE_AA);
  }
  cv::line(img, {ml, mt}, {ml, h - mb}, axis, 1);
  cv::line(img, {ml, h - mb}, {w - mr, h - mb}, axis, 1);

  for (std::size_t i = 1; i < records.size(); ++i)
    cv::line(img, {px(records[i - 1].epoch), py(records[i - 1].mean_train_loss)},
             {px(records[i].epoch), py(records[i].mean_train_loss)}, curve, 2,
             cv::LINE_AA);
  for (const auto& r : records)
    cv::circle(img, {px(r.epoch), py(r.mean_train_loss)}, 3, curve, cv::FILLED,
               cv::LINE_AA);

  // Epoch ticks: first, last and up to 8 between.
  const int ticks = std::min<int>(10, static_cast<int>(records.size()));
  for (int i = 0; i < ticks; ++i) {
    const int e = min_epoch + static_cast<int>(span * i / std::max(1, ticks - 1));
    cv::putText(img, std::to_string(e), {px(e) - 8, h - mb + 22},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1, cv::LINE_AA);
  }
  cv::putText(img, "mean training loss per epoch", {ml, 30},
              cv::FONT_HERSHEY_SIMPLEX, 0.6, axis, 1, cv::LINE_AA);
  cv::putText(img, "epoch", {(w - ml - mr) / 2 + ml - 20, h - 16},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1, cv::LINE_AA);

  if (!cv::imwrite(path, img))
    throw FileError(fmt::format("cannot write loss curve {}", path));
}

}  // namespace cxr
