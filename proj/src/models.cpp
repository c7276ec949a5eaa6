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
// Layer tables follow the standard pretrained definitions (parameter names
// included), so exported weight blobs stay interchangeable between runs and
// the familiar layer names resolve for activation capture.

#include "cxr/models.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include <fmt/format.h>

#include "cxr/common.hpp"
#include "cxr/kernels.hpp"
#include "json.hpp"

namespace cxr {

using nn::AdaptiveAvgPool2d;
using nn::AvgPool2d;
using nn::BatchNorm2d;
using nn::Conv2d;
using nn::Ctx;
using nn::Dropout;
using nn::Flatten;
using nn::Linear;
using nn::MaxPool2d;
using nn::Module;
using nn::Param;
using nn::ReLU;
using nn::Sequential;

namespace {

using i64 = std::int64_t;

void acc(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw Error(fmt::format("gradient shape mismatch: {} vs {}", a.shape_str(),
                            b.shape_str()));
  kern::add_inplace(a.data(), b.data(), a.numel());
}

// conv + batchnorm + relu, the inception building block. eps follows the
// reference definition of these nets (1e-3, unlike the 1e-5 elsewhere).
std::unique_ptr<Sequential> basic_conv(i64 in, i64 out, i64 kh, i64 kw, i64 sh,
                                       i64 sw, i64 ph, i64 pw) {
  auto s = std::make_unique<Sequential>();
  s->add("conv", std::make_unique<Conv2d>(in, out, kh, kw, sh, sw, ph, pw, false));
  s->add("bn", std::make_unique<BatchNorm2d>(out, 1e-3f));
  s->add("relu", std::make_unique<ReLU>());
  return s;
}

std::unique_ptr<Sequential> basic_conv(i64 in, i64 out, i64 k, i64 stride = 1,
                                       i64 pad = 0) {
  return basic_conv(in, out, k, k, stride, stride, pad, pad);
}

// ---- Residual bottleneck (1x1 -> 3x3 -> 1x1, expansion 4) --------------------

class Bottleneck : public Module {
 public:
  Bottleneck(i64 inplanes, i64 planes, i64 stride) {
    conv1_ = std::make_unique<Conv2d>(inplanes, planes, 1, 1, 0, false);
    bn1_ = std::make_unique<BatchNorm2d>(planes);
    conv2_ = std::make_unique<Conv2d>(planes, planes, 3, stride, 1, false);
    bn2_ = std::make_unique<BatchNorm2d>(planes);
    conv3_ = std::make_unique<Conv2d>(planes, planes * 4, 1, 1, 0, false);
    bn3_ = std::make_unique<BatchNorm2d>(planes * 4);
    relu1_ = std::make_unique<ReLU>();
    relu2_ = std::make_unique<ReLU>();
    relu3_ = std::make_unique<ReLU>();
    if (stride != 1 || inplanes != planes * 4) {
      downsample_ = std::make_unique<Sequential>();
      downsample_->add("0",
                       std::make_unique<Conv2d>(inplanes, planes * 4, 1, stride,
                                                0, false));
      downsample_->add("1", std::make_unique<BatchNorm2d>(planes * 4));
    }
  }

  std::vector<std::pair<std::string, Module*>> children() override {
    std::vector<std::pair<std::string, Module*>> out = {
        {"conv1", conv1_.get()}, {"bn1", bn1_.get()},   {"relu1", relu1_.get()},
        {"conv2", conv2_.get()}, {"bn2", bn2_.get()},   {"relu2", relu2_.get()},
        {"conv3", conv3_.get()}, {"bn3", bn3_.get()},   {"relu3", relu3_.get()}};
    if (downsample_) out.emplace_back("downsample", downsample_.get());
    return out;
  }

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override {
    Tensor identity = downsample_ ? downsample_->forward(x, ctx) : x;
    Tensor out = relu1_->forward(bn1_->forward(conv1_->forward(x, ctx), ctx), ctx);
    out = relu2_->forward(bn2_->forward(conv2_->forward(out, ctx), ctx), ctx);
    out = bn3_->forward(conv3_->forward(out, ctx), ctx);
    acc(out, identity);
    return relu3_->forward(out, ctx);
  }

  Tensor do_backward(const Tensor& dy) override {
    const Tensor d = relu3_->backward(dy);
    Tensor dx =
        conv1_->backward(bn1_->backward(relu1_->backward(conv2_->backward(
            bn2_->backward(relu2_->backward(conv3_->backward(
                bn3_->backward(d))))))));
    if (downsample_) {
      acc(dx, downsample_->backward(d));
    } else {
      acc(dx, d);
    }
    return dx;
  }

 private:
  std::unique_ptr<Conv2d> conv1_, conv2_, conv3_;
  std::unique_ptr<BatchNorm2d> bn1_, bn2_, bn3_;
  std::unique_ptr<ReLU> relu1_, relu2_, relu3_;
  std::unique_ptr<Sequential> downsample_;
};

// ---- Inception blocks ----------------------------------------------------------

class InceptionA : public Module {
 public:
  InceptionA(i64 in, i64 pool_features) : pool_features_(pool_features) {
    branch1x1_ = basic_conv(in, 64, 1);
    branch5x5_1_ = basic_conv(in, 48, 1);
    branch5x5_2_ = basic_conv(48, 64, 5, 1, 2);
    branch3x3dbl_1_ = basic_conv(in, 64, 1);
    branch3x3dbl_2_ = basic_conv(64, 96, 3, 1, 1);
    branch3x3dbl_3_ = basic_conv(96, 96, 3, 1, 1);
    pool_ = std::make_unique<AvgPool2d>(3, 1, 1);
    branch_pool_ = basic_conv(in, pool_features, 1);
  }

  std::vector<std::pair<std::string, Module*>> children() override {
    return {{"branch1x1", branch1x1_.get()},
            {"branch5x5_1", branch5x5_1_.get()},
            {"branch5x5_2", branch5x5_2_.get()},
            {"branch3x3dbl_1", branch3x3dbl_1_.get()},
            {"branch3x3dbl_2", branch3x3dbl_2_.get()},
            {"branch3x3dbl_3", branch3x3dbl_3_.get()},
            {"pool", pool_.get()},
            {"branch_pool", branch_pool_.get()}};
  }

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override {
    const Tensor b1 = branch1x1_->forward(x, ctx);
    const Tensor b5 =
        branch5x5_2_->forward(branch5x5_1_->forward(x, ctx), ctx);
    const Tensor b3 = branch3x3dbl_3_->forward(
        branch3x3dbl_2_->forward(branch3x3dbl_1_->forward(x, ctx), ctx), ctx);
    const Tensor bp = branch_pool_->forward(pool_->forward(x, ctx), ctx);
    return nn::concat_channels({&b1, &b5, &b3, &bp});
  }

  Tensor do_backward(const Tensor& dy) override {
    auto parts = nn::split_channels(dy, {64, 64, 96, pool_features_});
    Tensor dx = branch1x1_->backward(parts[0]);
    acc(dx, branch5x5_1_->backward(branch5x5_2_->backward(parts[1])));
    acc(dx, branch3x3dbl_1_->backward(
                branch3x3dbl_2_->backward(branch3x3dbl_3_->backward(parts[2]))));
    acc(dx, pool_->backward(branch_pool_->backward(parts[3])));
    return dx;
  }

 private:
  i64 pool_features_;
  std::unique_ptr<Sequential> branch1x1_, branch5x5_1_, branch5x5_2_;
  std::unique_ptr<Sequential> branch3x3dbl_1_, branch3x3dbl_2_, branch3x3dbl_3_;
  std::unique_ptr<AvgPool2d> pool_;
  std::unique_ptr<Sequential> branch_pool_;
};

class InceptionB : public Module {
 public:
  explicit InceptionB(i64 in) : in_(in) {
    branch3x3_ = basic_conv(in, 384, 3, 2, 0);
    branch3x3dbl_1_ = basic_conv(in, 64, 1);
    branch3x3dbl_2_ = basic_conv(64, 96, 3, 1, 1);
    branch3x3dbl_3_ = basic_conv(96, 96, 3, 2, 0);
    pool_ = std::make_unique<MaxPool2d>(3, 2);
  }

  std::vector<std::pair<std::string, Module*>> children() override {
    return {{"branch3x3", branch3x3_.get()},
            {"branch3x3dbl_1", branch3x3dbl_1_.get()},
            {"branch3x3dbl_2", branch3x3dbl_2_.get()},
            {"branch3x3dbl_3", branch3x3dbl_3_.get()},
            {"pool", pool_.get()}};
  }

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override {
    const Tensor b3 = branch3x3_->forward(x, ctx);
    const Tensor bd = branch3x3dbl_3_->forward(
        branch3x3dbl_2_->forward(branch3x3dbl_1_->forward(x, ctx), ctx), ctx);
    const Tensor bp = pool_->forward(x, ctx);
    return nn::concat_channels({&b3, &bd, &bp});
  }

  Tensor do_backward(const Tensor& dy) override {
    auto parts = nn::split_channels(dy, {384, 96, in_});
    Tensor dx = branch3x3_->backward(parts[0]);
    acc(dx, branch3x3dbl_1_->backward(
                branch3x3dbl_2_->backward(branch3x3dbl_3_->backward(parts[1]))));
    acc(dx, pool_->backward(parts[2]));
    return dx;
  }

 private:
  i64 in_;
  std::unique_ptr<Sequential> branch3x3_;
  std::unique_ptr<Sequential> branch3x3dbl_1_, branch3x3dbl_2_, branch3x3dbl_3_;
  std::unique_ptr<MaxPool2d> pool_;
};

class InceptionC : public Module {
 public:
  InceptionC(i64 in, i64 c7) {
    branch1x1_ = basic_conv(in, 192, 1);
    branch7x7_1_ = basic_conv(in, c7, 1);
    branch7x7_2_ = basic_conv(c7, c7, 1, 7, 1, 1, 0, 3);
    branch7x7_3_ = basic_conv(c7, 192, 7, 1, 1, 1, 3, 0);
    branch7x7dbl_1_ = basic_conv(in, c7, 1);
    branch7x7dbl_2_ = basic_conv(c7, c7, 7, 1, 1, 1, 3, 0);
    branch7x7dbl_3_ = basic_conv(c7, c7, 1, 7, 1, 1, 0, 3);
    branch7x7dbl_4_ = basic_conv(c7, c7, 7, 1, 1, 1, 3, 0);
    branch7x7dbl_5_ = basic_conv(c7, 192, 1, 7, 1, 1, 0, 3);
    pool_ = std::make_unique<AvgPool2d>(3, 1, 1);
    branch_pool_ = basic_conv(in, 192, 1);
  }

  std::vector<std::pair<std::string, Module*>> children() override {
    return {{"branch1x1", branch1x1_.get()},
            {"branch7x7_1", branch7x7_1_.get()},
            {"branch7x7_2", branch7x7_2_.get()},
            {"branch7x7_3", branch7x7_3_.get()},
            {"branch7x7dbl_1", branch7x7dbl_1_.get()},
            {"branch7x7dbl_2", branch7x7dbl_2_.get()},
            {"branch7x7dbl_3", branch7x7dbl_3_.get()},
            {"branch7x7dbl_4", branch7x7dbl_4_.get()},
            {"branch7x7dbl_5", branch7x7dbl_5_.get()},
            {"pool", pool_.get()},
            {"branch_pool", branch_pool_.get()}};
  }

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override {
    const Tensor b1 = branch1x1_->forward(x, ctx);
    const Tensor b7 = branch7x7_3_->forward(
        branch7x7_2_->forward(branch7x7_1_->forward(x, ctx), ctx), ctx);
    Tensor bd = branch7x7dbl_1_->forward(x, ctx);
    bd = branch7x7dbl_2_->forward(bd, ctx);
    bd = branch7x7dbl_3_->forward(bd, ctx);
    bd = branch7x7dbl_4_->forward(bd, ctx);
    bd = branch7x7dbl_5_->forward(bd, ctx);
    const Tensor bp = branch_pool_->forward(pool_->forward(x, ctx), ctx);
    return nn::concat_channels({&b1, &b7, &bd, &bp});
  }

  Tensor do_backward(const Tensor& dy) override {
    auto parts = nn::split_channels(dy, {192, 192, 192, 192});
    Tensor dx = branch1x1_->backward(parts[0]);
    acc(dx, branch7x7_1_->backward(
                branch7x7_2_->backward(branch7x7_3_->backward(parts[1]))));
    Tensor dd = branch7x7dbl_5_->backward(parts[2]);
    dd = branch7x7dbl_4_->backward(dd);
    dd = branch7x7dbl_3_->backward(dd);
    dd = branch7x7dbl_2_->backward(dd);
    acc(dx, branch7x7dbl_1_->backward(dd));
    acc(dx, pool_->backward(branch_pool_->backward(parts[3])));
    return dx;
  }

 private:
  std::unique_ptr<Sequential> branch1x1_;
  std::unique_ptr<Sequential> branch7x7_1_, branch7x7_2_, branch7x7_3_;
  std::unique_ptr<Sequential> branch7x7dbl_1_, branch7x7dbl_2_, branch7x7dbl_3_,
      branch7x7dbl_4_, branch7x7dbl_5_;
  std::unique_ptr<AvgPool2d> pool_;
  std::unique_ptr<Sequential> branch_pool_;
};

class InceptionD : public Module {
 public:
  explicit InceptionD(i64 in) : in_(in) {
    branch3x3_1_ = basic_conv(in, 192, 1);
    branch3x3_2_ = basic_conv(192, 320, 3, 2, 0);
    branch7x7x3_1_ = basic_conv(in, 192, 1);
    branch7x7x3_2_ = basic_conv(192, 192, 1, 7, 1, 1, 0, 3);
    branch7x7x3_3_ = basic_conv(192, 192, 7, 1, 1, 1, 3, 0);
    branch7x7x3_4_ = basic_conv(192, 192, 3, 2, 0);
    pool_ = std::make_unique<MaxPool2d>(3, 2);
  }

  std::vector<std::pair<std::string, Module*>> children() override {
    return {{"branch3x3_1", branch3x3_1_.get()},
            {"branch3x3_2", branch3x3_2_.get()},
            {"branch7x7x3_1", branch7x7x3_1_.get()},
            {"branch7x7x3_2", branch7x7x3_2_.get()},
            {"branch7x7x3_3", branch7x7x3_3_.get()},
            {"branch7x7x3_4", branch7x7x3_4_.get()},
            {"pool", pool_.get()}};
  }

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override {
    const Tensor b3 = branch3x3_2_->forward(branch3x3_1_->forward(x, ctx), ctx);
    Tensor b7 = branch7x7x3_1_->forward(x, ctx);
    b7 = branch7x7x3_2_->forward(b7, ctx);
    b7 = branch7x7x3_3_->forward(b7, ctx);
    b7 = branch7x7x3_4_->forward(b7, ctx);
    const Tensor bp = pool_->forward(x, ctx);
    return nn::concat_channels({&b3, &b7, &bp});
  }

  Tensor do_backward(const Tensor& dy) override {
    auto parts = nn::split_channels(dy, {320, 192, in_});
    Tensor dx = branch3x3_1_->backward(branch3x3_2_->backward(parts[0]));
    Tensor d7 = branch7x7x3_4_->backward(parts[1]);
    d7 = branch7x7x3_3_->backward(d7);
    d7 = branch7x7x3_2_->backward(d7);
    acc(dx, branch7x7x3_1_->backward(d7));
    acc(dx, pool_->backward(parts[2]));
    return dx;
  }

 private:
  i64 in_;
  std::unique_ptr<Sequential> branch3x3_1_, branch3x3_2_;
  std::unique_ptr<Sequential> branch7x7x3_1_, branch7x7x3_2_, branch7x7x3_3_,
      branch7x7x3_4_;
  std::unique_ptr<MaxPool2d> pool_;
};

class InceptionE : public Module {
 public:
  explicit InceptionE(i64 in) {
    branch1x1_ = basic_conv(in, 320, 1);
    branch3x3_1_ = basic_conv(in, 384, 1);
    branch3x3_2a_ = basic_conv(384, 384, 1, 3, 1, 1, 0, 1);
    branch3x3_2b_ = basic_conv(384, 384, 3, 1, 1, 1, 1, 0);
    branch3x3dbl_1_ = basic_conv(in, 448, 1);
    branch3x3dbl_2_ = basic_conv(448, 384, 3, 1, 1);
    branch3x3dbl_3a_ = basic_conv(384, 384, 1, 3, 1, 1, 0, 1);
    branch3x3dbl_3b_ = basic_conv(384, 384, 3, 1, 1, 1, 1, 0);
    pool_ = std::make_unique<AvgPool2d>(3, 1, 1);
    branch_pool_ = basic_conv(in, 192, 1);
  }

  std::vector<std::pair<std::string, Module*>> children() override {
    return {{"branch1x1", branch1x1_.get()},
            {"branch3x3_1", branch3x3_1_.get()},
            {"branch3x3_2a", branch3x3_2a_.get()},
            {"branch3x3_2b", branch3x3_2b_.get()},
            {"branch3x3dbl_1", branch3x3dbl_1_.get()},
            {"branch3x3dbl_2", branch3x3dbl_2_.get()},
            {"branch3x3dbl_3a", branch3x3dbl_3a_.get()},
            {"branch3x3dbl_3b", branch3x3dbl_3b_.get()},
            {"pool", pool_.get()},
            {"branch_pool", branch_pool_.get()}};
  }

 protected:
  Tensor do_forward(const Tensor& x, const Ctx& ctx) override {
    const Tensor b1 = branch1x1_->forward(x, ctx);
    const Tensor y1 = branch3x3_1_->forward(x, ctx);
    const Tensor b3a = branch3x3_2a_->forward(y1, ctx);
    const Tensor b3b = branch3x3_2b_->forward(y1, ctx);
    const Tensor b3 = nn::concat_channels({&b3a, &b3b});
    const Tensor y2 =
        branch3x3dbl_2_->forward(branch3x3dbl_1_->forward(x, ctx), ctx);
    const Tensor bda = branch3x3dbl_3a_->forward(y2, ctx);
    const Tensor bdb = branch3x3dbl_3b_->forward(y2, ctx);
    const Tensor bd = nn::concat_channels({&bda, &bdb});
    const Tensor bp = branch_pool_->forward(pool_->forward(x, ctx), ctx);
    return nn::concat_channels({&b1, &b3, &bd, &bp});
  }

  Tensor do_backward(const Tensor& dy) override {
    auto parts = nn::split_channels(dy, {320, 768, 768, 192});
    Tensor dx = branch1x1_->backward(parts[0]);
    {
      auto sub = nn::split_channels(parts[1], {384, 384});
      Tensor d1 = branch3x3_2a_->backward(sub[0]);
      acc(d1, branch3x3_2b_->backward(sub[1]));
      acc(dx, branch3x3_1_->backward(d1));
    }
    {
      auto sub = nn::split_channels(parts[2], {384, 384});
      Tensor d2 = branch3x3dbl_3a_->backward(sub[0]);
      acc(d2, branch3x3dbl_3b_->backward(sub[1]));
      acc(dx, branch3x3dbl_1_->backward(branch3x3dbl_2_->backward(d2)));
    }
    acc(dx, pool_->backward(branch_pool_->backward(parts[3])));
    return dx;
  }

 private:
  std::unique_ptr<Sequential> branch1x1_;
  std::unique_ptr<Sequential> branch3x3_1_, branch3x3_2a_, branch3x3_2b_;
  std::unique_ptr<Sequential> branch3x3dbl_1_, branch3x3dbl_2_,
      branch3x3dbl_3a_, branch3x3dbl_3b_;
  std::unique_ptr<AvgPool2d> pool_;
  std::unique_ptr<Sequential> branch_pool_;
};

// ---- Architecture builders ------------------------------------------------------

struct Built {
  std::unique_ptr<Sequential> net;
  std::string head_name;
};

Built build_alexnet(int num_classes) {
  auto features = std::make_unique<Sequential>();
  features->add("0", std::make_unique<Conv2d>(3, 64, 11, 4, 2, true));
  features->add("1", std::make_unique<ReLU>());
  features->add("2", std::make_unique<MaxPool2d>(3, 2));
  features->add("3", std::make_unique<Conv2d>(64, 192, 5, 1, 2, true));
  features->add("4", std::make_unique<ReLU>());
  features->add("5", std::make_unique<MaxPool2d>(3, 2));
  features->add("6", std::make_unique<Conv2d>(192, 384, 3, 1, 1, true));
  features->add("7", std::make_unique<ReLU>());
  features->add("8", std::make_unique<Conv2d>(384, 256, 3, 1, 1, true));
  features->add("9", std::make_unique<ReLU>());
  features->add("10", std::make_unique<Conv2d>(256, 256, 3, 1, 1, true));
  features->add("11", std::make_unique<ReLU>());
  features->add("12", std::make_unique<MaxPool2d>(3, 2));

  auto classifier = std::make_unique<Sequential>();
  classifier->add("0", std::make_unique<Dropout>(0.5f, 1));
  classifier->add("1", std::make_unique<Linear>(256 * 6 * 6, 4096));
  classifier->add("2", std::make_unique<ReLU>());
  classifier->add("3", std::make_unique<Dropout>(0.5f, 2));
  classifier->add("4", std::make_unique<Linear>(4096, 4096));
  classifier->add("5", std::make_unique<ReLU>());
  classifier->add("6", std::make_unique<Linear>(4096, num_classes));

  auto net = std::make_unique<Sequential>();
  net->add("features", std::move(features));
  net->add("avgpool", std::make_unique<AdaptiveAvgPool2d>(6, 6));
  net->add("flatten", std::make_unique<Flatten>());
  net->add("classifier", std::move(classifier));
  return {std::move(net), "classifier.6"};
}

Built build_resnet152(int num_classes) {
  auto stage = [](i64& inplanes, i64 planes, int blocks, i64 stride) {
    auto s = std::make_unique<Sequential>();
    s->add("0", std::make_unique<Bottleneck>(inplanes, planes, stride));
    inplanes = planes * 4;
    for (int i = 1; i < blocks; ++i)
      s->add(std::to_string(i), std::make_unique<Bottleneck>(inplanes, planes, 1));
    return s;
  };

  auto net = std::make_unique<Sequential>();
  net->add("conv1", std::make_unique<Conv2d>(3, 64, 7, 2, 3, false));
  net->add("bn1", std::make_unique<BatchNorm2d>(64));
  net->add("relu", std::make_unique<ReLU>());
  net->add("maxpool", std::make_unique<MaxPool2d>(3, 2, 1));
  i64 inplanes = 64;
  net->add("layer1", stage(inplanes, 64, 3, 1));
  net->add("layer2", stage(inplanes, 128, 8, 2));
  net->add("layer3", stage(inplanes, 256, 36, 2));
  net->add("layer4", stage(inplanes, 512, 3, 2));
  net->add("avgpool", std::make_unique<AdaptiveAvgPool2d>(1, 1));
  net->add("flatten", std::make_unique<Flatten>());
  net->add("fc", std::make_unique<Linear>(2048, num_classes));
  return {std::move(net), "fc"};
}

Built build_inception_v3(int num_classes) {
  // Auxiliary classifier intentionally absent: it exists only to inject a
  // second loss during original-recipe training, which this toolkit does not
  // use.
  auto net = std::make_unique<Sequential>();
  net->add("Conv2d_1a_3x3", basic_conv(3, 32, 3, 2, 0));
  net->add("Conv2d_2a_3x3", basic_conv(32, 32, 3, 1, 0));
  net->add("Conv2d_2b_3x3", basic_conv(32, 64, 3, 1, 1));
  net->add("maxpool1", std::make_unique<MaxPool2d>(3, 2));
  net->add("Conv2d_3b_1x1", basic_conv(64, 80, 1));
  net->add("Conv2d_4a_3x3", basic_conv(80, 192, 3, 1, 0));
  net->add("maxpool2", std::make_unique<MaxPool2d>(3, 2));
  net->add("Mixed_5b", std::make_unique<InceptionA>(192, 32));
  net->add("Mixed_5c", std::make_unique<InceptionA>(256, 64));
  net->add("Mixed_5d", std::make_unique<InceptionA>(288, 64));
  net->add("Mixed_6a", std::make_unique<InceptionB>(288));
  net->add("Mixed_6b", std::make_unique<InceptionC>(768, 128));
  net->add("Mixed_6c", std::make_unique<InceptionC>(768, 160));
  net->add("Mixed_6d", std::make_unique<InceptionC>(768, 160));
  net->add("Mixed_6e", std::make_unique<InceptionC>(768, 192));
  net->add("Mixed_7a", std::make_unique<InceptionD>(768));
  net->add("Mixed_7b", std::make_unique<InceptionE>(1280));
  net->add("Mixed_7c", std::make_unique<InceptionE>(2048));
  net->add("avgpool", std::make_unique<AdaptiveAvgPool2d>(1, 1));
  net->add("dropout", std::make_unique<Dropout>(0.5f, 1));
  net->add("flatten", std::make_unique<Flatten>());
  net->add("fc", std::make_unique<Linear>(2048, num_classes));
  return {std::move(net), "fc"};
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}

bool under_prefix(const std::string& name, const std::string& module_name) {
  return name == module_name || starts_with(name, module_name + ".");
}

}  // namespace

// ---- ModelSpec --------------------------------------------------------------------

void ModelSpec::validate() const {
  if (arch.empty()) throw ValidationError("model spec: arch is empty");
  if (num_classes < 1)
    throw ValidationError(
        fmt::format("model spec: num_classes must be >= 1, got {}", num_classes));
  if (freeze_policy != "none" && freeze_policy != "backbone" &&
      freeze_policy != "up_to_boundary")
    throw ValidationError(fmt::format(
        "model spec: freeze_policy '{}' not one of none, backbone, up_to_boundary",
        freeze_policy));
  if (input_size < 0)
    throw ValidationError("model spec: input_size must be >= 0");
}

// ---- ClassifierModel -----------------------------------------------------------------

ClassifierModel::ClassifierModel(ModelSpec spec, ArchProfile profile,
                                 std::unique_ptr<Sequential> net,
                                 std::string head_name)
    : spec_(std::move(spec)),
      profile_(std::move(profile)),
      net_(std::move(net)),
      head_name_(std::move(head_name)) {
  modules_ = nn::named_modules(*net_);
}

Tensor ClassifierModel::forward(const Tensor& x, const Ctx& ctx) {
  if (x.ndim() != 4 || x.dim(0) < 1 || x.dim(1) != 3 ||
      x.dim(2) != profile_.input_size || x.dim(3) != profile_.input_size)
    throw ValidationError(
        fmt::format("model {}: expected input (B, 3, {}, {}), got {}",
                    spec_.arch, profile_.input_size, profile_.input_size,
                    x.shape_str()));
  return net_->forward(x, ctx);
}

Tensor ClassifierModel::backward(const Tensor& dlogits) {
  return net_->backward(dlogits);
}

std::vector<std::pair<std::string, Param*>> ClassifierModel::named_params() {
  return nn::named_parameters(*net_);
}

std::vector<std::pair<std::string, Param*>>
ClassifierModel::trainable_parameters() {
  std::vector<std::pair<std::string, Param*>> out;
  for (auto& [name, p] : named_params())
    if (p->trainable && !p->is_buffer) out.emplace_back(name, p);
  return out;
}

std::vector<std::string> ClassifierModel::layer_names() const {
  std::vector<std::string> out;
  out.reserve(modules_.size());
  for (const auto& [name, m] : modules_) out.push_back(name);
  return out;
}

nn::Module* ClassifierModel::resolve_layer(const std::string& name_or_depth) {
  std::string name = name_or_depth;
  if (name == "early") name = profile_.cam_layers.early;
  else if (name == "middle") name = profile_.cam_layers.middle;
  else if (name == "final") name = profile_.cam_layers.final;

  for (auto& [n, m] : modules_)
    if (n == name) return m;

  // No match: offer substring candidates, falling back to the top level.
  std::vector<std::string> cand;
  for (const auto& [n, m] : modules_)
    if (n.find(name) != std::string::npos) cand.push_back(n);
  if (cand.empty())
    for (auto [n, m] : net_->children()) cand.push_back(n);
  if (cand.size() > 12) cand.resize(12);
  throw ValidationError(
      fmt::format("layer '{}' not found in {} ({} layers); candidates: {}",
                  name, spec_.arch, modules_.size(), fmt::join(cand, ", ")));
}

void ClassifierModel::apply_freeze_policy(const std::string& policy) {
  auto params = named_params();
  if (policy == "none") {
    for (auto& [name, p] : params) p->trainable = !p->is_buffer;
  } else if (policy == "backbone") {
    for (auto& [name, p] : params)
      p->trainable = !p->is_buffer && under_prefix(name, head_name_);
  } else if (policy == "up_to_boundary") {
    const std::string& boundary = profile_.freeze_boundary;
    bool reached = false;
    bool any = false;
    for (auto& [name, p] : params) {
      if (!reached && under_prefix(name, boundary)) reached = true;
      any = any || reached;
      p->trainable =
          !p->is_buffer && (reached || under_prefix(name, head_name_));
    }
    if (!any)
      throw ValidationError(fmt::format(
          "freeze boundary '{}' matches no parameters of {}", boundary,
          spec_.arch));
  } else {
    throw ValidationError(fmt::format(
        "freeze policy '{}' not one of none, backbone, up_to_boundary", policy));
  }
  spec_.freeze_policy = policy;
}

std::uint64_t ClassifierModel::parameter_checksum() {
  std::uint64_t h = 14695981039346656037ull;
  for (auto& [name, p] : named_params()) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(reinterpret_cast<const char*>(p->value.data()),
              sizeof(float) * static_cast<std::size_t>(p->value.numel()), h);
  }
  return h;
}

std::vector<std::pair<std::string, std::uint64_t>>
ClassifierModel::parameter_checksums() {
  std::vector<std::pair<std::string, std::uint64_t>> out;
  for (auto& [name, p] : named_params())
    out.emplace_back(
        name, fnv1a(reinterpret_cast<const char*>(p->value.data()),
                    sizeof(float) * static_cast<std::size_t>(p->value.numel()),
                    14695981039346656037ull));
  return out;
}

// ---- build / weight store ------------------------------------------------------------

ClassifierModel build_model(const ModelSpec& spec) {
  spec.validate();
  ArchProfile profile = builtin_profile(spec.arch);
  if (spec.input_size > 0) profile.input_size = spec.input_size;

  Built b;
  if (spec.arch == "alexnet") b = build_alexnet(spec.num_classes);
  else if (spec.arch == "resnet152") b = build_resnet152(spec.num_classes);
  else b = build_inception_v3(spec.num_classes);

  ClassifierModel model(spec, std::move(profile), std::move(b.net),
                        std::move(b.head_name));
  nn::initialize_parameters(model.net(), spec.seed);
  if (spec.pretrained) load_backbone(model, backbone_store_path(spec));
  model.apply_freeze_policy(spec.freeze_policy);
  return model;
}

std::string backbone_store_path(const ModelSpec& spec) {
  std::string dir = spec.weights_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("CXR_WEIGHTS_DIR"); env && *env)
      dir = env;
    else
      dir = "weights";
  }
  return dir + "/" + spec.arch + ".cxrw";
}

void export_backbone(ClassifierModel& model, const std::string& path) {
  TensorMap out;
  for (auto& [name, p] : model.named_params())
    if (!under_prefix(name, model.head_name())) out.emplace_back(name, p->value);
  const auto dir = std::filesystem::path(path).parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  save_tensor_blob(path, out);
}

void load_backbone(ClassifierModel& model, const std::string& path) {
  if (!std::filesystem::exists(path))
    throw FileError(fmt::format(
        "pretrained weights for {} not found at {} — export a backbone there "
        "or build with pretrained=false",
        model.spec().arch, path));
  TensorMap blob = load_tensor_blob(path);
  std::unordered_map<std::string, Tensor*> by_name;
  for (auto& [name, t] : blob) by_name[name] = &t;

  std::size_t used = 0;
  for (auto& [name, p] : model.named_params()) {
    if (under_prefix(name, model.head_name())) continue;  // head stays fresh
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw ValidationError(
          fmt::format("backbone blob {} is missing parameter {}", path, name));
    if (!(it->second->shape() == p->value.shape()))
      throw ValidationError(fmt::format(
          "backbone blob {}: parameter {} has shape {}, model expects {}", path,
          name, it->second->shape_str(), p->value.shape_str()));
    p->value = *it->second;
    ++used;
  }
  if (used != blob.size()) {
    std::vector<std::string> extra;
    std::unordered_map<std::string, bool> model_names;
    for (auto& [name, p] : model.named_params()) model_names[name] = true;
    for (auto& [name, t] : blob)
      if (!model_names.count(name)) extra.push_back(name);
    if (!extra.empty()) {
      if (extra.size() > 8) extra.resize(8);
      throw ValidationError(
          fmt::format("backbone blob {} holds parameters unknown to {}: {}",
                      path, model.spec().arch, fmt::join(extra, ", ")));
    }
  }
}

// ---- Checkpoint directory ---------------------------------------------------------------

namespace {

constexpr const char* kWeightsFile = "weights.cxrw";
constexpr const char* kMetaFile = "meta.json";

}  // namespace

void save_checkpoint(ClassifierModel& model, const std::string& dir,
                     const CheckpointMeta& meta, const TensorMap& extra) {
  std::filesystem::create_directories(dir);
  TensorMap all;
  for (auto& [name, p] : model.named_params()) all.emplace_back(name, p->value);
  for (const auto& [name, t] : extra) {
    for (const auto& [pname, pt] : all)
      if (pname == name)
        throw ValidationError(fmt::format(
            "checkpoint extra entry '{}' collides with a parameter", name));
    all.emplace_back(name, t);
  }
  save_tensor_blob((std::filesystem::path(dir) / kWeightsFile).string(), all);

  nlohmann::json j;
  j["arch"] = meta.arch;
  j["num_classes"] = meta.num_classes;
  j["vocabulary"] = meta.vocabulary;
  j["freeze_policy"] = meta.freeze_policy;
  j["epoch"] = meta.epoch;
  j["config_hash"] = meta.config_hash;
  j["input_size"] = meta.input_size;
  j["seed"] = meta.seed;
  const std::string meta_path = (std::filesystem::path(dir) / kMetaFile).string();
  std::ofstream out(meta_path);
  if (!out) throw FileError(fmt::format("cannot write {}", meta_path));
  out << j.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  const std::string meta_path = (std::filesystem::path(dir) / kMetaFile).string();
  if (!std::filesystem::exists(meta_path))
    throw FileError(
        fmt::format("not a checkpoint directory (no {}): {}", kMetaFile, dir));
  std::ifstream in(meta_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("bad checkpoint meta {}: {}", meta_path,
                                      e.what()));
  }
  CheckpointMeta meta;
  try {
    meta.arch = j.at("arch").get<std::string>();
    meta.num_classes = j.at("num_classes").get<int>();
    meta.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    meta.freeze_policy = j.at("freeze_policy").get<std::string>();
    meta.epoch = j.at("epoch").get<int>();
    meta.config_hash = j.at("config_hash").get<std::uint64_t>();
    meta.input_size = j.at("input_size").get<std::int64_t>();
    meta.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("bad checkpoint meta {}: {}", meta_path,
                                      e.what()));
  }

  ModelSpec spec;
  spec.arch = meta.arch;
  spec.num_classes = meta.num_classes;
  spec.pretrained = false;  // weights come from the blob below
  spec.freeze_policy = meta.freeze_policy;
  spec.seed = meta.seed;
  spec.input_size = meta.input_size;

  LoadedCheckpoint loaded{build_model(spec), meta, {}};

  const std::string blob_path =
      (std::filesystem::path(dir) / kWeightsFile).string();
  TensorMap blob = load_tensor_blob(blob_path);
  std::unordered_map<std::string, Tensor*> by_name;
  for (auto& [name, t] : blob) by_name[name] = &t;

  std::unordered_map<std::string, bool> model_names;
  for (auto& [name, p] : loaded.model.named_params()) {
    model_names[name] = true;
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw ValidationError(
          fmt::format("checkpoint {} is missing parameter {}", blob_path, name));
    if (!(it->second->shape() == p->value.shape()))
      throw ValidationError(fmt::format(
          "checkpoint {}: parameter {} has shape {}, model expects {}",
          blob_path, name, it->second->shape_str(), p->value.shape_str()));
    p->value = *it->second;
  }
  for (auto& [name, t] : blob) {
    if (model_names.count(name)) continue;
    if (!starts_with(name, "optim."))
      throw ValidationError(fmt::format(
          "checkpoint {} holds unexpected entry '{}'", blob_path, name));
    loaded.extra.emplace_back(name, std::move(t));
  }
  return loaded;
}

}  // namespace cxr
