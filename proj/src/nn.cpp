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

#include "cxr/nn.hpp"

#include <cmath>
#include <cstring>

#include <fmt/format.h>

#include "cxr/common.hpp"
#include "cxr/rng.hpp"

namespace cxr::nn {

void Param::ensure_grad() {
  if (!grad.same_shape(value)) grad.resize(value.shape());
}

Tensor Module::forward(const Tensor& x, const Ctx& ctx) {
  Tensor y = do_forward(x, ctx);
  if (capture_) cap_out_ = y;
  return y;
}

Tensor Module::backward(const Tensor& dy) {
  if (capture_) cap_grad_ = dy;
  return do_backward(dy);
}

void Module::set_capture(bool on) {
  capture_ = on;
  if (!on) {
    cap_out_ = Tensor();
    cap_grad_ = Tensor();
  }
}

const Tensor& Module::captured_output() const {
  if (cap_out_.empty())
    throw Error("captured_output: no forward ran while capture was enabled");
  return cap_out_;
}

const Tensor& Module::captured_gradient() const {
  if (cap_grad_.empty())
    throw Error("captured_gradient: no backward ran while capture was enabled");
  return cap_grad_;
}

namespace {

void walk(Module* m, const std::string& prefix,
          std::vector<std::pair<std::string, Module*>>& out) {
  for (auto [name, child] : m->children()) {
    const std::string full = prefix.empty() ? name : prefix + "." + name;
    out.emplace_back(full, child);
    walk(child, full, out);
  }
}

}  // namespace

std::vector<std::pair<std::string, Module*>> named_modules(Module& root) {
  std::vector<std::pair<std::string, Module*>> out;
  walk(&root, "", out);
  return out;
}

std::vector<std::pair<std::string, Param*>> named_parameters(Module& root) {
  std::vector<std::pair<std::string, Param*>> out;
  for (auto [name, p] : root.params()) out.emplace_back(name, p);
  for (auto [mod_name, m] : named_modules(root))
    for (auto [p_name, p] : m->params())
      out.emplace_back(mod_name + "." + p_name, p);
  return out;
}

void initialize_parameters(Module& root, std::uint64_t seed) {
  for (auto& [name, p] : named_parameters(root)) {
    switch (p->init) {
      case Param::Init::kZeros:
        p->value.zero();
        break;
      case Param::Init::kOnes:
        p->value.fill(1.0f);
        break;
      case Param::Init::kFanInUniform: {
        if (p->fan_in <= 0)
          throw Error(fmt::format("parameter {}: fan_in not set", name));
        // Independent stream per parameter name: the same (seed, name) pair
        // always produces the same values, whatever the walk order.
        Rng rng(mix_seed({seed, fnv1a(name)}));
        const float bound =
            1.0f / std::sqrt(static_cast<float>(p->fan_in));
        float* v = p->value.data();
        for (std::int64_t i = 0; i < p->value.numel(); ++i)
          v[i] = rng.uniform_float() * 2.0f * bound - bound;
        break;
      }
    }
  }
}

void zero_grads(Module& root) {
  for (auto& [name, p] : named_parameters(root)) {
    if (p->is_buffer) continue;
    p->ensure_grad();
    p->grad.zero();
  }
}

// ---- Conv2d -------------------------------------------------------------------

Conv2d::Conv2d(std::int64_t in_c, std::int64_t out_c, std::int64_t kh,
               std::int64_t kw, std::int64_t sh, std::int64_t sw,
               std::int64_t ph, std::int64_t pw, bool with_bias)
    : with_bias_(with_bias) {
  geom_ = {in_c, out_c, kh, kw, sh, sw, ph, pw};
  weight_.value.resize({out_c, in_c, kh, kw});
  weight_.init = Param::Init::kFanInUniform;
  weight_.fan_in = in_c * kh * kw;
  if (with_bias_) {
    bias_.value.resize({out_c});
    bias_.init = Param::Init::kZeros;
  }
}

std::vector<std::pair<std::string, Param*>> Conv2d::params() {
  if (with_bias_) return {{"weight", &weight_}, {"bias", &bias_}};
  return {{"weight", &weight_}};
}

Tensor Conv2d::do_forward(const Tensor& x, const Ctx& ctx) {
  if (x.ndim() != 4 || x.dim(1) != geom_.in_c)
    throw ValidationError(fmt::format("conv2d: expected (B, {}, H, W), got {}",
                                      geom_.in_c, x.shape_str()));
  const std::int64_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = geom_.out_h(h), ow = geom_.out_w(w);
  if (oh <= 0 || ow <= 0)
    throw ValidationError(fmt::format(
        "conv2d: input {} too small for kernel {}x{} stride {}x{}",
        x.shape_str(), geom_.kh, geom_.kw, geom_.sh, geom_.sw));
  Tensor y({b, geom_.out_c, oh, ow});
  kern::conv2d_forward(x.data(), b, h, w, weight_.value.data(),
                       with_bias_ ? bias_.value.data() : nullptr, y.data(),
                       geom_, scratch_);
  x_ = ctx.need_grad ? x : Tensor();
  return y;
}

Tensor Conv2d::do_backward(const Tensor& dy) {
  if (x_.empty()) throw Error("conv2d: backward without cached forward");
  const std::int64_t b = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
  if (weight_.trainable) {
    weight_.ensure_grad();
    if (with_bias_) bias_.ensure_grad();
    kern::conv2d_backward_weights(x_.data(), dy.data(), b, h, w,
                                  weight_.grad.data(),
                                  with_bias_ ? bias_.grad.data() : nullptr,
                                  geom_, scratch_);
  }
  Tensor dx(x_.shape());
  kern::conv2d_backward_input(dy.data(), b, h, w, weight_.value.data(),
                              dx.data(), geom_, scratch_);
  return dx;
}

// ---- BatchNorm2d ----------------------------------------------------------------

BatchNorm2d::BatchNorm2d(std::int64_t c, float eps, float momentum)
    : c_(c), eps_(eps), momentum_(momentum) {
  gamma_.value.resize({c});
  gamma_.init = Param::Init::kOnes;
  beta_.value.resize({c});
  beta_.init = Param::Init::kZeros;
  running_mean_.value.resize({c});
  running_mean_.init = Param::Init::kZeros;
  running_mean_.is_buffer = true;
  running_mean_.trainable = false;
  running_var_.value.resize({c});
  running_var_.init = Param::Init::kOnes;
  running_var_.is_buffer = true;
  running_var_.trainable = false;
}

std::vector<std::pair<std::string, Param*>> BatchNorm2d::params() {
  return {{"weight", &gamma_},
          {"bias", &beta_},
          {"running_mean", &running_mean_},
          {"running_var", &running_var_}};
}

Tensor BatchNorm2d::do_forward(const Tensor& x, const Ctx& ctx) {
  if (x.ndim() != 4 || x.dim(1) != c_)
    throw ValidationError(fmt::format("batchnorm: expected (B, {}, H, W), got {}",
                                      c_, x.shape_str()));
  const std::int64_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor y(x.shape());
  // A frozen layer keeps using its stored statistics even in train mode, so
  // the backbone's normalization does not drift while its weights cannot
  // adapt to the drift.
  used_batch_stats_ = ctx.train && gamma_.trainable;
  if (used_batch_stats_) {
    save_mean_.resize({c_});
    save_invstd_.resize({c_});
    kern::bn_forward_train(x.data(), b, c_, h, w, gamma_.value.data(),
                           beta_.value.data(), running_mean_.value.data(),
                           running_var_.value.data(), momentum_, eps_, y.data(),
                           save_mean_.data(), save_invstd_.data());
    x_ = ctx.need_grad ? x : Tensor();
  } else {
    kern::bn_forward_eval(x.data(), b, c_, h, w, gamma_.value.data(),
                          beta_.value.data(), running_mean_.value.data(),
                          running_var_.value.data(), eps_, y.data());
    // Trainable gamma/beta still receive gradients through the eval path
    // (their grads need x), e.g. when a gradient check runs in eval mode.
    x_ = ctx.need_grad && gamma_.trainable ? x : Tensor();
    if (ctx.need_grad) in_shape_ = x.shape();
  }
  return y;
}

Tensor BatchNorm2d::do_backward(const Tensor& dy) {
  if (used_batch_stats_) {
    if (x_.empty()) throw Error("batchnorm: backward without cached forward");
    const std::int64_t b = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    gamma_.ensure_grad();
    beta_.ensure_grad();
    Tensor dx(x_.shape());
    kern::bn_backward_train(x_.data(), dy.data(), b, c_, h, w,
                            gamma_.value.data(), save_mean_.data(),
                            save_invstd_.data(), dx.data(), gamma_.grad.data(),
                            beta_.grad.data());
    return dx;
  }
  if (in_shape_.empty()) throw Error("batchnorm: backward without cached forward");
  const std::int64_t b = in_shape_[0], h = in_shape_[2], w = in_shape_[3];
  Tensor dx(in_shape_);
  kern::bn_backward_eval(dy.data(), b, c_, h, w, gamma_.value.data(),
                         running_var_.value.data(), eps_, dx.data());
  if (gamma_.trainable && !x_.empty()) {
    gamma_.ensure_grad();
    beta_.ensure_grad();
    const std::int64_t spatial = h * w;
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < c_; ++c) {
      const double mean = running_mean_.value[c];
      const double invstd =
          1.0 / std::sqrt(static_cast<double>(running_var_.value[c]) +
                          static_cast<double>(eps_));
      double dg = 0.0, db = 0.0;
      for (std::int64_t i = 0; i < b; ++i) {
        const float* xv = x_.data() + (i * c_ + c) * spatial;
        const float* gv = dy.data() + (i * c_ + c) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) {
          dg += static_cast<double>(gv[s]) *
                (static_cast<double>(xv[s]) - mean) * invstd;
          db += gv[s];
        }
      }
      gamma_.grad[c] += static_cast<float>(dg);
      beta_.grad[c] += static_cast<float>(db);
    }
  }
  return dx;
}

// ---- ReLU ----------------------------------------------------------------------

Tensor ReLU::do_forward(const Tensor& x, const Ctx& ctx) {
  Tensor y(x.shape());
  kern::relu_forward(x.data(), y.data(), x.numel());
  y_ = ctx.need_grad ? y : Tensor();
  return y;
}

Tensor ReLU::do_backward(const Tensor& dy) {
  if (y_.empty()) throw Error("relu: backward without cached forward");
  Tensor dx(y_.shape());
  kern::relu_backward(y_.data(), dy.data(), dx.data(), y_.numel());
  return dx;
}

// ---- Pooling ---------------------------------------------------------------------

Tensor MaxPool2d::do_forward(const Tensor& x, const Ctx& ctx) {
  (void)ctx;
  const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = (h + 2 * ph_ - kh_) / sh_ + 1;
  const std::int64_t ow = (w + 2 * pw_ - kw_) / sw_ + 1;
  if (oh <= 0 || ow <= 0)
    throw ValidationError(fmt::format("maxpool: input {} too small", x.shape_str()));
  Tensor y({b, c, oh, ow});
  idx_.resize(static_cast<std::size_t>(y.numel()));
  kern::maxpool_forward(x.data(), b, c, h, w, kh_, kw_, sh_, sw_, ph_, pw_,
                        y.data(), idx_.data());
  in_shape_ = x.shape();
  out_shape_ = y.shape();
  return y;
}

Tensor MaxPool2d::do_backward(const Tensor& dy) {
  if (idx_.empty()) throw Error("maxpool: backward without cached forward");
  Tensor dx(in_shape_);
  kern::maxpool_backward(dy.data(), idx_.data(), in_shape_[0], in_shape_[1],
                         out_shape_[2], out_shape_[3], in_shape_[2],
                         in_shape_[3], dx.data());
  return dx;
}

Tensor AvgPool2d::do_forward(const Tensor& x, const Ctx& ctx) {
  (void)ctx;
  const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = (h + 2 * ph_ - kh_) / sh_ + 1;
  const std::int64_t ow = (w + 2 * pw_ - kw_) / sw_ + 1;
  if (oh <= 0 || ow <= 0)
    throw ValidationError(fmt::format("avgpool: input {} too small", x.shape_str()));
  Tensor y({b, c, oh, ow});
  kern::avgpool_forward(x.data(), b, c, h, w, kh_, kw_, sh_, sw_, ph_, pw_,
                        y.data());
  in_shape_ = x.shape();
  out_shape_ = y.shape();
  return y;
}

Tensor AvgPool2d::do_backward(const Tensor& dy) {
  if (in_shape_.empty()) throw Error("avgpool: backward without cached forward");
  Tensor dx(in_shape_);
  kern::avgpool_backward(dy.data(), in_shape_[0], in_shape_[1], out_shape_[2],
                         out_shape_[3], in_shape_[2], in_shape_[3], kh_, kw_,
                         sh_, sw_, ph_, pw_, dx.data());
  return dx;
}

Tensor AdaptiveAvgPool2d::do_forward(const Tensor& x, const Ctx& ctx) {
  (void)ctx;
  // Output larger than input is fine: windows shrink to single elements and
  // values replicate, which is what lets the nets run at reduced resolution.
  const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({b, c, oh_, ow_});
  kern::adaptive_avgpool_forward(x.data(), b, c, h, w, oh_, ow_, y.data());
  in_shape_ = x.shape();
  return y;
}

Tensor AdaptiveAvgPool2d::do_backward(const Tensor& dy) {
  if (in_shape_.empty())
    throw Error("adaptive avgpool: backward without cached forward");
  Tensor dx(in_shape_);
  kern::adaptive_avgpool_backward(dy.data(), in_shape_[0], in_shape_[1],
                                  in_shape_[2], in_shape_[3], oh_, ow_,
                                  dx.data());
  return dx;
}

// ---- Dropout ---------------------------------------------------------------------

Dropout::Dropout(float p, std::uint64_t salt) : p_(p), salt_(salt) {
  if (!(p >= 0.0f && p < 1.0f))
    throw ValidationError(fmt::format("dropout: p must be in [0, 1), got {}", p));
}

Tensor Dropout::do_forward(const Tensor& x, const Ctx& ctx) {
  active_ = ctx.train && p_ > 0.0f;
  if (!active_) return x;
  key_ = mix_seed({ctx.dropout_key, salt_});
  Tensor y(x.shape());
  kern::dropout_forward(x.data(), y.data(), x.numel(), p_, key_);
  return y;
}

Tensor Dropout::do_backward(const Tensor& dy) {
  if (!active_) return dy;
  Tensor dx(dy.shape());
  kern::dropout_backward(dy.data(), dx.data(), dy.numel(), p_, key_);
  return dx;
}

// ---- Flatten ---------------------------------------------------------------------

Tensor Flatten::do_forward(const Tensor& x, const Ctx& ctx) {
  (void)ctx;
  if (x.ndim() < 2) throw ValidationError("flatten: need at least 2 dims");
  in_shape_ = x.shape();
  Tensor y = x;
  y.resize({x.dim(0), x.numel() / x.dim(0)});
  return y;
}

Tensor Flatten::do_backward(const Tensor& dy) {
  if (in_shape_.empty()) throw Error("flatten: backward without cached forward");
  Tensor dx = dy;
  dx.resize(in_shape_);
  return dx;
}

// ---- Linear ----------------------------------------------------------------------

Linear::Linear(std::int64_t in, std::int64_t out, bool with_bias)
    : in_(in), out_(out), with_bias_(with_bias) {
  weight_.value.resize({out, in});
  weight_.init = Param::Init::kFanInUniform;
  weight_.fan_in = in;
  if (with_bias_) {
    bias_.value.resize({out});
    bias_.init = Param::Init::kZeros;
  }
}

std::vector<std::pair<std::string, Param*>> Linear::params() {
  if (with_bias_) return {{"weight", &weight_}, {"bias", &bias_}};
  return {{"weight", &weight_}};
}

Tensor Linear::do_forward(const Tensor& x, const Ctx& ctx) {
  if (x.ndim() != 2 || x.dim(1) != in_)
    throw ValidationError(fmt::format("linear: expected (B, {}), got {}", in_,
                                      x.shape_str()));
  const std::int64_t b = x.dim(0);
  Tensor y({b, out_});
  kern::linear_forward(x.data(), b, in_, out_, weight_.value.data(),
                       with_bias_ ? bias_.value.data() : nullptr, y.data());
  x_ = ctx.need_grad ? x : Tensor();
  return y;
}

Tensor Linear::do_backward(const Tensor& dy) {
  if (x_.empty()) throw Error("linear: backward without cached forward");
  const std::int64_t b = x_.dim(0);
  if (weight_.trainable) {
    weight_.ensure_grad();
    if (with_bias_) bias_.ensure_grad();
    kern::linear_backward_params(x_.data(), dy.data(), b, in_, out_,
                                 weight_.grad.data(),
                                 with_bias_ ? bias_.grad.data() : nullptr);
  }
  Tensor dx({b, in_});
  kern::linear_backward_input(dy.data(), b, in_, out_, weight_.value.data(),
                              dx.data());
  return dx;
}

// ---- Sequential ------------------------------------------------------------------

Module* Sequential::add(std::string name, std::unique_ptr<Module> m) {
  Module* raw = m.get();
  kids_.emplace_back(std::move(name), std::move(m));
  return raw;
}

std::vector<std::pair<std::string, Module*>> Sequential::children() {
  std::vector<std::pair<std::string, Module*>> out;
  out.reserve(kids_.size());
  for (auto& [name, m] : kids_) out.emplace_back(name, m.get());
  return out;
}

Tensor Sequential::do_forward(const Tensor& x, const Ctx& ctx) {
  if (kids_.empty()) throw Error("sequential: no children");
  Tensor cur = kids_.front().second->forward(x, ctx);
  for (std::size_t i = 1; i < kids_.size(); ++i)
    cur = kids_[i].second->forward(cur, ctx);
  return cur;
}

Tensor Sequential::do_backward(const Tensor& dy) {
  if (kids_.empty()) throw Error("sequential: no children");
  Tensor cur = kids_.back().second->backward(dy);
  for (std::size_t i = kids_.size() - 1; i-- > 0;)
    cur = kids_[i].second->backward(cur);
  return cur;
}

// ---- Channel concat ----------------------------------------------------------------

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw Error("concat_channels: no inputs");
  const Tensor& first = *parts.front();
  if (first.ndim() != 4) throw ValidationError("concat_channels: need 4-d inputs");
  const std::int64_t b = first.dim(0), h = first.dim(2), w = first.dim(3);
  std::int64_t total_c = 0;
  for (const Tensor* p : parts) {
    if (p->ndim() != 4 || p->dim(0) != b || p->dim(2) != h || p->dim(3) != w)
      throw ValidationError(
          fmt::format("concat_channels: shape {} does not match {}",
                      p->shape_str(), first.shape_str()));
    total_c += p->dim(1);
  }
  Tensor y({b, total_c, h, w});
  const std::int64_t spatial = h * w;
  std::int64_t c_off = 0;
  for (const Tensor* p : parts) {
    const std::int64_t pc = p->dim(1);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < b; ++i)
      std::memcpy(y.data() + (i * total_c + c_off) * spatial,
                  p->data() + i * pc * spatial,
                  sizeof(float) * static_cast<std::size_t>(pc * spatial));
    c_off += pc;
  }
  return y;
}

std::vector<Tensor> split_channels(const Tensor& x,
                                   const std::vector<std::int64_t>& channels) {
  if (x.ndim() != 4) throw ValidationError("split_channels: need a 4-d input");
  const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::int64_t sum = 0;
  for (const std::int64_t pc : channels) sum += pc;
  if (sum != c)
    throw ValidationError(fmt::format(
        "split_channels: parts sum to {} but input has {} channels", sum, c));
  std::vector<Tensor> out;
  out.reserve(channels.size());
  const std::int64_t spatial = h * w;
  std::int64_t c_off = 0;
  for (const std::int64_t pc : channels) {
    Tensor part({b, pc, h, w});
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < b; ++i)
      std::memcpy(part.data() + i * pc * spatial,
                  x.data() + (i * c + c_off) * spatial,
                  sizeof(float) * static_cast<std::size_t>(pc * spatial));
    c_off += pc;
    out.push_back(std::move(part));
  }
  return out;
}

}  // namespace cxr::nn
