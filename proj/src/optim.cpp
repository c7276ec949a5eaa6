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

#include "cxr/optim.hpp"

#include <unordered_map>

#include <fmt/format.h>

#include "cxr/common.hpp"
#include "cxr/kernels.hpp"

namespace cxr {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ValidationError("adam: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("adam: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ValidationError("adam: eps must be > 0");
}

Adam::Adam(std::vector<std::pair<std::string, nn::Param*>> params,
           AdamConfig cfg)
    : cfg_(cfg) {
  cfg_.validate();
  if (params.empty())
    throw ValidationError(
        "adam: empty parameter list — is everything frozen?");
  slots_.reserve(params.size());
  for (auto& [name, p] : params) {
    Slot s;
    s.name = name;
    s.p = p;
    s.m = Tensor::zeros(p->value.shape());
    s.v = Tensor::zeros(p->value.shape());
    slots_.push_back(std::move(s));
  }
}

void Adam::step() {
  ++t_;
  for (Slot& s : slots_) {
    s.p->ensure_grad();
    kern::adam_step(s.p->value.data(), s.p->grad.data(), s.m.data(),
                    s.v.data(), s.p->value.numel(), t_,
                    static_cast<float>(cfg_.lr), static_cast<float>(cfg_.beta1),
                    static_cast<float>(cfg_.beta2),
                    static_cast<float>(cfg_.eps));
  }
}

TensorMap Adam::export_state() const {
  TensorMap out;
  Tensor t({1});
  t.data()[0] = static_cast<float>(t_);  // exact below 2^24 steps
  out.emplace_back("optim.t", t);
  for (const Slot& s : slots_) {
    out.emplace_back("optim.m." + s.name, s.m);
    out.emplace_back("optim.v." + s.name, s.v);
  }
  return out;
}

void Adam::import_state(const TensorMap& state) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : state) by_name[name] = &t;

  const auto take = [&](const std::string& name, const Tensor& like) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw ValidationError(
          fmt::format("optimizer state is missing '{}'", name));
    if (!it->second->same_shape(like) && name != "optim.t")
      throw ValidationError(
          fmt::format("optimizer state '{}' has shape {}, expected {}", name,
                      it->second->shape_str(), like.shape_str()));
    const Tensor* found = it->second;
    by_name.erase(it);
    return found;
  };

  const Tensor* t = take("optim.t", Tensor({1}));
  if (t->numel() != 1)
    throw ValidationError("optimizer state 'optim.t' must hold one value");
  t_ = static_cast<std::int64_t>(t->data()[0]);

  for (Slot& s : slots_) {
    s.m = *take("optim.m." + s.name, s.m);
    s.v = *take("optim.v." + s.name, s.v);
  }
  if (!by_name.empty())
    throw ValidationError(fmt::format(
        "optimizer state holds {} entries for parameters not being trained "
        "(first: {}) — the freeze policy differs from the checkpointed run",
        by_name.size(), by_name.begin()->first));
}

}  // namespace cxr
