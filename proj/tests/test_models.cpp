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
// Whole-network checks. Parameter counts are pinned against the published
// sizes of the standard definitions; gradient flow is checked end to end with
// directional finite differences at reduced input sizes (every architecture
// here is size-agnostic, so a small canvas exercises the same code).

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "cxr/common.hpp"
#include "cxr/models.hpp"
#include "cxr/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using cxr::build_model;
using cxr::ClassifierModel;
using cxr::Error;
using cxr::FileError;
using cxr::load_checkpoint;
using cxr::ModelSpec;
using cxr::Rng;
using cxr::Tensor;
using cxr::TensorMap;
using cxr::ValidationError;
namespace nn = cxr::nn;
using cxrtest::scratch_dir;

namespace {

using i64 = std::int64_t;

const nn::Ctx kEval{false, false, 0};
const nn::Ctx kEvalGrad{false, true, 0};
const nn::Ctx kTrainGrad{true, true, 0};

Tensor randt(const cxr::Shape& shape, Rng& rng, float lo = -1.0f,
             float hi = 1.0f) {
  Tensor t(shape);
  for (i64 i = 0; i < t.numel(); ++i)
    t.data()[i] = lo + (hi - lo) * rng.uniform_float();
  return t;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data(), b.data(),
                     sizeof(float) * static_cast<std::size_t>(a.numel())) == 0;
}

bool all_finite(const Tensor& t) {
  for (i64 i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t.data()[i])) return false;
  return true;
}

// The smallest canvas each tower accepts (every pooling stage must stay >= 1).
ModelSpec tiny_spec(const std::string& arch, int num_classes = 5) {
  ModelSpec spec;
  spec.arch = arch;
  spec.num_classes = num_classes;
  spec.freeze_policy = "none";
  spec.seed = 1234;
  spec.input_size = arch == "alexnet" ? 64 : (arch == "resnet152" ? 48 : 80);
  return spec;
}

i64 count_values(std::vector<std::pair<std::string, nn::Param*>> params) {
  i64 n = 0;
  for (auto& [name, p] : params) n += p->value.numel();
  return n;
}

nn::Param* find_param(ClassifierModel& model, const std::string& name) {
  for (auto& [n, p] : model.named_params())
    if (n == name) return p;
  REQUIRE_MESSAGE(false, "parameter not found: " << name);
  return nullptr;
}

double loss_of(ClassifierModel& model, const Tensor& x, const Tensor& w,
               const nn::Ctx& ctx) {
  const Tensor y = model.forward(x, ctx);
  double acc = 0.0;
  for (i64 i = 0; i < y.numel(); ++i)
    acc += static_cast<double>(y.data()[i]) * static_cast<double>(w.data()[i]);
  return acc;
}

}  // namespace

TEST_SUITE_BEGIN("models");

TEST_CASE("spec validation and the registry reject nonsense") {
  ModelSpec spec = tiny_spec("alexnet");
  spec.num_classes = 0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = tiny_spec("alexnet");
  spec.freeze_policy = "everything";
  CHECK_THROWS_AS(spec.validate(), ValidationError);

  spec = tiny_spec("vgg16");
  CHECK_THROWS_WITH_AS(build_model(spec),
                       doctest::Contains("alexnet"), ValidationError);
}

TEST_CASE("every architecture maps (B, 3, S, S) to (B, num_classes) for B in {1, 2, 7}") {
  for (const char* arch : {"alexnet", "resnet152", "inception_v3"}) {
    CAPTURE(arch);
    ClassifierModel model = build_model(tiny_spec(arch));
    const i64 s = model.profile().input_size;
    Rng rng(2024);
    for (const i64 b : {1, 2, 7}) {
      const Tensor y = model.forward(randt({b, 3, s, s}, rng), kEval);
      REQUIRE(y.ndim() == 2);
      CHECK(y.dim(0) == b);
      CHECK(y.dim(1) == 5);
      CHECK(all_finite(y));
    }
    // Wrong rank, channel count or canvas are refused up front.
    CHECK_THROWS_AS(model.forward(randt({1, 1, s, s}, rng), kEval),
                    ValidationError);
    CHECK_THROWS_AS(model.forward(randt({1, 3, s + 1, s + 1}, rng), kEval),
                    ValidationError);
  }
}

TEST_CASE("alexnet still works at its native 224 canvas") {
  ModelSpec spec = tiny_spec("alexnet", 14);
  spec.input_size = 0;  // native
  ClassifierModel model = build_model(spec);
  CHECK(model.profile().input_size == 224);
  Rng rng(5);
  const Tensor y = model.forward(randt({1, 3, 224, 224}, rng), kEval);
  CHECK(y.dim(1) == 14);
  CHECK(all_finite(y));
}

TEST_CASE("parameter counts match the published sizes of the standard definitions") {
  // Published totals with a 1000-way head, adjusted for a 14-way head (and,
  // for the inception tower, minus its auxiliary classifier, which this
  // toolkit does not build).
  struct Pin {
    const char* arch;
    i64 want;
  };
  const Pin pins[] = {
      {"alexnet", 61100840 - 4097 * 1000 + 4097 * 14},
      {"resnet152", 60192808 - 2049 * 1000 + 2049 * 14},
      {"inception_v3", 27161264 - 3326696 - 2049 * 1000 + 2049 * 14},
  };
  for (const auto& pin : pins) {
    CAPTURE(pin.arch);
    ModelSpec spec = tiny_spec(pin.arch, 14);
    ClassifierModel model = build_model(spec);
    CHECK(count_values(model.trainable_parameters()) == pin.want);
  }
}

TEST_CASE("analytic gradients agree with directional finite differences") {
  // Probed one parameter tensor at a time: the first convolution (the full
  // backward chain feeds it), one mid-network tensor, and the head. Eval mode
  // keeps the network piecewise-linear, so central differences are clean.
  struct Probe {
    const char* arch;
    std::vector<std::string> params;
  };
  const Probe probes[] = {
      {"alexnet",
       {"features.0.weight", "features.6.weight", "classifier.6.weight"}},
      {"resnet152", {"conv1.weight", "layer2.0.bn1.weight", "fc.weight"}},
      {"inception_v3",
       {"Conv2d_1a_3x3.conv.weight", "Mixed_5b.branch1x1.bn.weight",
        "fc.weight"}},
  };

  for (const auto& probe : probes) {
    CAPTURE(probe.arch);
    ClassifierModel model = build_model(tiny_spec(probe.arch, 3));
    const i64 s = model.profile().input_size;
    Rng rng(31);
    const Tensor x = randt({2, 3, s, s}, rng);
    const Tensor w = randt({2, 3}, rng);  // fixed linear functional of logits

    nn::zero_grads(model.net());
    model.forward(x, kEvalGrad);
    model.backward(w);

    for (const std::string& pname : probe.params) {
      CAPTURE(pname);
      nn::Param* p = find_param(model, pname);
      REQUIRE(p->grad.numel() == p->value.numel());

      Rng dir_rng(cxr::fnv1a(pname));
      Tensor eps(p->value.shape());
      for (i64 i = 0; i < eps.numel(); ++i)
        eps.data()[i] = dir_rng.uniform_float() < 0.5f ? -1.0f : 1.0f;

      double analytic = 0.0;
      for (i64 i = 0; i < eps.numel(); ++i)
        analytic += static_cast<double>(p->grad.data()[i]) *
                    static_cast<double>(eps.data()[i]);

      const float h = 1e-3f;
      const Tensor saved = p->value;
      for (i64 i = 0; i < eps.numel(); ++i)
        p->value.data()[i] = saved.data()[i] + h * eps.data()[i];
      const double lp = loss_of(model, x, w, kEval);
      for (i64 i = 0; i < eps.numel(); ++i)
        p->value.data()[i] = saved.data()[i] - h * eps.data()[i];
      const double lm = loss_of(model, x, w, kEval);
      p->value = saved;

      const double fd = (lp - lm) / (2.0 * static_cast<double>(h));
      const double tol = 2e-2 * std::max(1.0, std::abs(analytic));
      CHECK_MESSAGE(std::abs(fd - analytic) <= tol,
                    "fd=" << fd << " analytic=" << analytic);
    }
  }
}

TEST_CASE("freeze policies pin exactly the advertised parameters") {
  ClassifierModel model = build_model(tiny_spec("alexnet"));

  model.apply_freeze_policy("none");
  for (auto& [name, p] : model.named_params())
    CHECK(p->trainable == !p->is_buffer);

  model.apply_freeze_policy("backbone");
  for (auto& [name, p] : model.trainable_parameters())
    CHECK(name.rfind("classifier.6.", 0) == 0);
  CHECK(model.trainable_parameters().size() == 2);  // head weight and bias

  model.apply_freeze_policy("up_to_boundary");
  bool saw_classifier = false;
  for (auto& [name, p] : model.named_params()) {
    if (p->is_buffer) {
      CHECK(!p->trainable);
      continue;
    }
    if (name.rfind("features.", 0) == 0) CHECK(!p->trainable);
    if (name.rfind("classifier.", 0) == 0) {
      CHECK(p->trainable);
      saw_classifier = true;
    }
  }
  CHECK(saw_classifier);
  CHECK_THROWS_AS(model.apply_freeze_policy("almost"), ValidationError);
}

TEST_CASE("the resnet boundary keeps layer4 and the head trainable, nothing else") {
  ClassifierModel model = build_model(tiny_spec("resnet152"));
  model.apply_freeze_policy("up_to_boundary");
  i64 trainable = 0;
  for (auto& [name, p] : model.named_params()) {
    if (p->is_buffer) {
      CHECK(!p->trainable);
      continue;
    }
    const bool inside =
        name.rfind("layer4.", 0) == 0 || name.rfind("fc.", 0) == 0;
    CHECK(p->trainable == inside);
    trainable += p->trainable;
  }
  CHECK(trainable > 2);
}

TEST_CASE("frozen layers receive no gradient and frozen batch norms hold their stats") {
  ModelSpec spec = tiny_spec("resnet152");
  spec.freeze_policy = "up_to_boundary";
  ClassifierModel model = build_model(spec);

  nn::Param* frozen_stat = find_param(model, "bn1.running_mean");
  nn::Param* live_stat = find_param(model, "layer4.0.bn1.running_mean");
  const Tensor frozen_before = frozen_stat->value;
  const Tensor live_before = live_stat->value;

  Rng rng(77);
  const i64 s = model.profile().input_size;
  nn::zero_grads(model.net());
  model.forward(randt({2, 3, s, s}, rng), kTrainGrad);
  model.backward(randt({2, 5}, rng));

  CHECK(same_bits(frozen_stat->value, frozen_before));   // held
  CHECK(!same_bits(live_stat->value, live_before));      // updated

  i64 frozen_nonzero = 0, live_nonzero = 0;
  for (auto& [name, p] : model.named_params()) {
    if (p->is_buffer || p->grad.numel() == 0) continue;
    bool nonzero = false;
    for (i64 i = 0; i < p->grad.numel() && !nonzero; ++i)
      nonzero = p->grad.data()[i] != 0.0f;
    if (p->trainable)
      live_nonzero += nonzero;
    else
      frozen_nonzero += nonzero;
  }
  CHECK(frozen_nonzero == 0);
  CHECK(live_nonzero > 0);
}

TEST_CASE("layer names follow the familiar naming scheme and resolve for capture") {
  ClassifierModel alex = build_model(tiny_spec("alexnet"));
  auto has = [](const std::vector<std::string>& names, const char* want) {
    for (const auto& n : names)
      if (n == want) return true;
    return false;
  };
  const auto alex_names = alex.layer_names();
  CHECK(has(alex_names, "features.0"));
  CHECK(has(alex_names, "avgpool"));
  CHECK(has(alex_names, "classifier.6"));

  // Depth aliases map through the profile's capture table.
  CHECK(alex.resolve_layer("early") == alex.resolve_layer("features.1"));
  CHECK(alex.resolve_layer("middle") == alex.resolve_layer("features.7"));
  CHECK(alex.resolve_layer("final") == alex.resolve_layer("features.11"));
  CHECK_THROWS_WITH_AS(alex.resolve_layer("festures.3"),
                       doctest::Contains("candidates"), ValidationError);

  ClassifierModel res = build_model(tiny_spec("resnet152"));
  const auto res_names = res.layer_names();
  CHECK(has(res_names, "layer3.35.conv3"));
  CHECK(has(res_names, "layer1.0.downsample.1"));
  CHECK(res.resolve_layer("final") == res.resolve_layer("layer4.2"));

  ClassifierModel inc = build_model(tiny_spec("inception_v3"));
  const auto inc_names = inc.layer_names();
  CHECK(has(inc_names, "Mixed_7c.branch_pool.conv"));
  CHECK(has(inc_names, "Mixed_6a.branch3x3dbl_2.bn"));
  CHECK(has(inc_names, "Mixed_6b.branch7x7dbl_5.relu"));
  CHECK(inc.resolve_layer("middle") == inc.resolve_layer("Mixed_6e"));
}

TEST_CASE("the backbone store round-trips and loading is strict") {
  const auto dir = scratch_dir("backbone");

  ModelSpec donor_spec = tiny_spec("alexnet", 3);
  donor_spec.seed = 111;
  ClassifierModel donor = build_model(donor_spec);
  const std::string path = (dir / "alexnet.cxrw").string();
  cxr::export_backbone(donor, path);

  // A recipient with a different head size and seed takes the backbone
  // bit for bit; the head stays freshly initialized.
  ModelSpec spec = tiny_spec("alexnet", 5);
  spec.seed = 222;
  spec.pretrained = true;
  spec.weights_dir = dir.string();
  ClassifierModel model = build_model(spec);

  ModelSpec fresh_spec = spec;
  fresh_spec.pretrained = false;
  ClassifierModel fresh = build_model(fresh_spec);

  for (auto& [name, p] : model.named_params()) {
    if (name.rfind("classifier.6.", 0) == 0)
      CHECK(same_bits(p->value, find_param(fresh, name)->value));
    else
      CHECK(same_bits(p->value, find_param(donor, name)->value));
  }
  CHECK(model.parameter_checksum() != fresh.parameter_checksum());

  // Missing store: a hard error that names the path, never a random init.
  ModelSpec lost = spec;
  lost.weights_dir = (dir / "nowhere").string();
  CHECK_THROWS_WITH_AS(build_model(lost), doctest::Contains("nowhere"),
                       FileError);

  // A blob missing one tensor, or holding an unknown one, is refused.
  TensorMap blob = cxr::load_tensor_blob(path);
  TensorMap pruned;
  for (auto& [name, t] : blob)
    if (name != "features.3.bias") pruned.emplace_back(name, t);
  cxr::save_tensor_blob(path, pruned);
  CHECK_THROWS_WITH_AS(build_model(spec), doctest::Contains("features.3.bias"),
                       ValidationError);

  TensorMap extended = blob;
  extended.emplace_back("features.99.weight", Tensor::full({2, 2}, 1.0f));
  cxr::save_tensor_blob(path, extended);
  CHECK_THROWS_WITH_AS(build_model(spec), doctest::Contains("features.99.weight"),
                       ValidationError);

  // Shape drift on an existing tensor is refused too.
  TensorMap reshaped;
  for (auto& [name, t] : blob)
    reshaped.emplace_back(name, name == "features.3.bias" ? Tensor::full({7}, 1.0f) : t);
  cxr::save_tensor_blob(path, reshaped);
  CHECK_THROWS_WITH_AS(build_model(spec), doctest::Contains("shape"),
                       ValidationError);
}

TEST_CASE("building the same spec twice is bit-identical") {
  ModelSpec spec = tiny_spec("alexnet", 4);
  ClassifierModel a = build_model(spec);
  ClassifierModel b = build_model(spec);
  CHECK(a.parameter_checksum() == b.parameter_checksum());

  spec.seed += 1;
  ClassifierModel c = build_model(spec);
  CHECK(a.parameter_checksum() != c.parameter_checksum());

  // Per-tensor checksums localize any drift.
  auto ca = a.parameter_checksums();
  auto cb = b.parameter_checksums();
  REQUIRE(ca.size() == cb.size());
  for (std::size_t i = 0; i < ca.size(); ++i) {
    CHECK(ca[i].first == cb[i].first);
    CHECK(ca[i].second == cb[i].second);
  }
}

TEST_CASE("a checkpoint directory restores the model, meta and extras exactly") {
  const auto dir = scratch_dir("checkpoint");
  const std::string ckpt = (dir / "epoch_003").string();

  ModelSpec spec = tiny_spec("alexnet", 4);
  spec.seed = 9;
  spec.freeze_policy = "up_to_boundary";
  ClassifierModel model = build_model(spec);

  // Nudge a weight so the checkpoint differs from a fresh build.
  find_param(model, "features.0.weight")->value.data()[0] += 0.25f;

  cxr::CheckpointMeta meta;
  meta.arch = spec.arch;
  meta.num_classes = spec.num_classes;
  meta.vocabulary = {"a", "b", "c", "d"};
  meta.freeze_policy = spec.freeze_policy;
  meta.epoch = 3;
  meta.config_hash = 0xabcdef12u;
  meta.input_size = 64;
  meta.seed = spec.seed;

  TensorMap extra;
  extra.emplace_back("optim.step", Tensor::full({1}, 42.0f));
  cxr::save_checkpoint(model, ckpt, meta, extra);

  cxr::LoadedCheckpoint loaded = load_checkpoint(ckpt);
  CHECK(loaded.meta.arch == "alexnet");
  CHECK(loaded.meta.vocabulary == meta.vocabulary);
  CHECK(loaded.meta.epoch == 3);
  CHECK(loaded.meta.config_hash == 0xabcdef12u);
  CHECK(loaded.meta.input_size == 64);
  REQUIRE(loaded.extra.size() == 1);
  CHECK(loaded.extra[0].first == "optim.step");
  CHECK(loaded.extra[0].second.data()[0] == 42.0f);
  CHECK(loaded.model.parameter_checksum() == model.parameter_checksum());
  CHECK(loaded.model.spec().freeze_policy == "up_to_boundary");

  // Same logits, bit for bit.
  Rng rng(3);
  const Tensor x = randt({2, 3, 64, 64}, rng);
  CHECK(same_bits(loaded.model.forward(x, kEval), model.forward(x, kEval)));

  // The freeze policy is reapplied on load.
  for (auto& [name, p] : loaded.model.named_params())
    if (name.rfind("features.", 0) == 0) CHECK(!p->trainable);

  // Strictness: a colliding extra name, a missing directory, damaged meta.
  TensorMap bad_extra;
  bad_extra.emplace_back("features.0.bias", Tensor::full({1}, 1.0f));
  CHECK_THROWS_AS(cxr::save_checkpoint(model, ckpt, meta, bad_extra),
                  ValidationError);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing").string()), FileError);

  std::filesystem::rename(std::filesystem::path(ckpt) / "weights.cxrw",
                          std::filesystem::path(ckpt) / "weights.gone");
  CHECK_THROWS_AS(load_checkpoint(ckpt), FileError);
}

TEST_SUITE_END();
