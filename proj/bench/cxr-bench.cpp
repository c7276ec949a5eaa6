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
// Kernel and model benchmarks.
//
//   cxr-bench kernels   serial reference vs OpenMP kernels (vs BLAS for
//                       GEMM), with agreement columns: the parallel code
//                       must not drift from the textbook loops it replaces.
//   cxr-bench model     forward+backward wall time for one architecture at
//                       a chosen input size and batch, e.g. to size a
//                       desk-scale experiment before committing to it.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <omp.h>

#include "CLI11.hpp"
#include "cxr/common.hpp"
#include "cxr/kernels.hpp"
#include "cxr/kernels_ref.hpp"
#include "cxr/losses.hpp"
#include "cxr/models.hpp"
#include "cxr/nn.hpp"
#include "cxr/optim.hpp"
#include "cxr/rng.hpp"
#include "cxr/tensor.hpp"

namespace {

using cxr::Rng;
using cxr::Tensor;
using i64 = std::int64_t;
namespace kern = cxr::kern;

double now_sec() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

/// Best-of-`reps` wall time for one call.
double time_best(int reps, const std::function<void()>& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_sec();
    fn();
    best = std::min(best, now_sec() - t0);
  }
  return best;
}

std::vector<float> randv(i64 n, Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = 2.0f * rng.uniform_float() - 1.0f;
  return v;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) -
                             static_cast<double>(b[i])));
  return m;
}

void print_row(const std::string& name, double serial, double parallel,
               double diff, const std::string& note = "") {
  fmt::print("{:<34} {:>10.2f} {:>10.2f} {:>8.1f}x {:>10.2e}  {}\n", name,
             serial * 1e3, parallel * 1e3, serial / parallel, diff, note);
}

int run_kernels(int reps) {
  fmt::print("{:<34} {:>10} {:>10} {:>9} {:>10}\n", "kernel", "serial ms",
             "openmp ms", "speedup", "max |d|");
  fmt::print("{}\n", std::string(80, '-'));
  Rng rng(1);

  {  // GEMM at a classifier-head-ish size.
    const i64 m = 256, k = 2304, n = 256;
    const auto a = randv(m * k, rng), b = randv(k * n, rng);
    std::vector<float> c_ref(static_cast<std::size_t>(m * n)),
        c_omp(c_ref.size()), c_blas(c_ref.size());

    const double t_ref = time_best(reps, [&] {
      kern::ref::gemm<float>(false, false, m, n, k, 1.0f, a.data(), k,
                             b.data(), n, 0.0f, c_ref.data(), n);
    });
    const double t_omp = time_best(reps, [&] {
      kern::gemm_builtin(false, false, m, n, k, 1.0f, a.data(), k, b.data(), n,
                         0.0f, c_omp.data(), n);
    });
    const double t_blas = time_best(reps, [&] {
      kern::gemm(false, false, m, n, k, 1.0f, a.data(), k, b.data(), n, 0.0f,
                 c_blas.data(), n);
    });
    print_row(fmt::format("gemm {}x{}x{} (builtin)", m, k, n), t_ref, t_omp,
              max_abs_diff(c_ref, c_omp));
    print_row(fmt::format("gemm {}x{}x{} (linked)", m, k, n), t_ref, t_blas,
              max_abs_diff(c_ref, c_blas));
  }

  {  // Convolution at a mid-network geometry.
    kern::ConvGeom g;
    g.in_c = 64;
    g.out_c = 128;
    g.kh = g.kw = 3;
    g.sh = g.sw = 1;
    g.ph = g.pw = 1;
    const i64 b = 4, h = 28, w = 28;
    const auto x = randv(b * g.in_c * h * w, rng);
    const auto wt = randv(g.out_c * g.in_c * 9, rng);
    const auto bias = randv(g.out_c, rng);
    const i64 on = b * g.out_c * g.out_h(h) * g.out_w(w);
    std::vector<float> y_ref(static_cast<std::size_t>(on)), y_omp(y_ref.size());

    const double t_ref = time_best(reps, [&] {
      kern::ref::conv2d_forward<float>(x.data(), b, h, w, wt.data(),
                                       bias.data(), y_ref.data(), g);
    });
    kern::ConvScratch scratch;
    const double t_omp = time_best(reps, [&] {
      kern::conv2d_forward(x.data(), b, h, w, wt.data(), bias.data(),
                           y_omp.data(), g, scratch);
    });
    print_row("conv2d 64->128 3x3 on 4x28x28", t_ref, t_omp,
              max_abs_diff(y_ref, y_omp));
  }

  {  // Max pooling.
    const i64 b = 8, c = 64, h = 56, w = 56;
    const auto x = randv(b * c * h * w, rng);
    const i64 oh = (h - 3) / 2 + 1, ow = (w - 3) / 2 + 1;
    std::vector<float> y_ref(static_cast<std::size_t>(b * c * oh * ow)),
        y_omp(y_ref.size());
    std::vector<i64> idx(y_ref.size());

    std::vector<i64> idx_ref(y_ref.size());
    const double t_ref = time_best(reps, [&] {
      kern::ref::maxpool_forward<float>(x.data(), b, c, h, w, 3, 3, 2, 2, 0, 0,
                                        y_ref.data(), idx_ref.data());
    });
    const double t_omp = time_best(reps, [&] {
      kern::maxpool_forward(x.data(), b, c, h, w, 3, 3, 2, 2, 0, 0,
                            y_omp.data(), idx.data());
    });
    print_row("maxpool 3x3 s2 on 8x64x56x56", t_ref, t_omp,
              max_abs_diff(y_ref, y_omp));
  }

  {  // Batch-norm training pass.
    const i64 b = 16, c = 128, h = 28, w = 28;
    const auto x = randv(b * c * h * w, rng);
    const auto gamma = randv(c, rng), beta = randv(c, rng);
    std::vector<float> y_ref(x.size()), y_omp(x.size());
    std::vector<float> mean_r(static_cast<std::size_t>(c)),
        ist_r(mean_r.size()), mean_o(mean_r.size()), ist_o(mean_r.size());
    std::vector<float> rm_r(mean_r.size()), rv_r(mean_r.size(), 1.0f),
        rm_o(mean_r.size()), rv_o(mean_r.size(), 1.0f);

    const double t_ref = time_best(reps, [&] {
      kern::ref::bn_forward_train<float>(
          x.data(), b, c, h, w, gamma.data(), beta.data(), rm_r.data(),
          rv_r.data(), 0.1f, 1e-5f, y_ref.data(), mean_r.data(), ist_r.data());
    });
    const double t_omp = time_best(reps, [&] {
      kern::bn_forward_train(x.data(), b, c, h, w, gamma.data(), beta.data(),
                             rm_o.data(), rv_o.data(), 0.1f, 1e-5f,
                             y_omp.data(), mean_o.data(), ist_o.data());
    });
    print_row("bn train on 16x128x28x28", t_ref, t_omp,
              max_abs_diff(y_ref, y_omp));
  }

  {  // ReLU (bandwidth bound; the floor for parallel gains).
    const i64 n = 8 * 1024 * 1024;
    const auto x = randv(n, rng);
    std::vector<float> y_ref(x.size()), y_omp(x.size());
    const double t_ref = time_best(reps, [&] {
      kern::ref::relu_forward<float>(x.data(), y_ref.data(), n);
    });
    const double t_omp = time_best(
        reps, [&] { kern::relu_forward(x.data(), y_omp.data(), n); });
    print_row("relu on 8M", t_ref, t_omp, max_abs_diff(y_ref, y_omp));
  }

  fmt::print(
      "\ntimes are best-of-{}; speedup is serial/openmp on this machine "
      "({} thread(s)).\n",
      reps, omp_get_max_threads());
  return 0;
}

int run_model(const std::string& arch, i64 size, i64 batch, int steps) {
  cxr::ModelSpec spec;
  spec.arch = arch;
  spec.num_classes = 3;
  spec.pretrained = false;
  spec.freeze_policy = "none";
  spec.seed = 7;
  spec.input_size = size;

  const double t_build0 = now_sec();
  auto model = cxr::build_model(spec);
  fmt::print("build {} @ {}px: {:.2f} s\n", arch, model.spec().input_size,
             now_sec() - t_build0);

  Rng rng(2);
  Tensor x({batch, 3, size, size});
  for (i64 i = 0; i < x.numel(); ++i)
    x.data()[i] = 2.0f * rng.uniform_float() - 1.0f;
  Tensor y = Tensor::zeros({batch, 3});
  for (i64 i = 0; i < batch; ++i) y.data()[i * 3 + i % 3] = 1.0f;

  cxr::Adam opt(model.trainable_parameters(), {.lr = 1e-4});
  const cxr::nn::Ctx ctx{true, true, 42};
  cxr::LossSpec loss;
  loss.kind = "bce";

  double fwd = 0.0, bwd = 0.0, step = 0.0;
  for (int s = 0; s < steps; ++s) {
    cxr::nn::zero_grads(model.net());
    double t0 = now_sec();
    const Tensor logits = model.forward(x, ctx);
    const double t1 = now_sec();
    Tensor dlogits;
    loss.grad(logits, y, dlogits);
    model.backward(dlogits);
    const double t2 = now_sec();
    opt.step();
    const double t3 = now_sec();
    fwd += t1 - t0;
    bwd += t2 - t1;
    step += t3 - t2;
    fmt::print("  step {:>2}: fwd {:6.3f} s  bwd {:6.3f} s  adam {:6.3f} s\n",
               s, t1 - t0, t2 - t1, t3 - t2);
  }
  fmt::print(
      "mean over {} steps @ batch {}: fwd {:.3f} s, bwd {:.3f} s, adam {:.3f} "
      "s, total {:.3f} s/step ({:.3f} s/image)\n",
      steps, batch, fwd / steps, bwd / steps, step / steps,
      (fwd + bwd + step) / steps, (fwd + bwd + step) / steps / batch);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cxr kernel and model benchmarks"};
  app.require_subcommand(1);

  int reps = 3;
  auto* kernels = app.add_subcommand(
      "kernels", "serial reference vs parallel kernels, with agreement");
  kernels->add_option("--reps", reps, "repetitions per timing (best-of)");

  std::string arch = "alexnet";
  i64 size = 64, batch = 8;
  int steps = 3;
  auto* model = app.add_subcommand(
      "model", "forward+backward+update wall time for one architecture");
  model->add_option("--arch", arch, "alexnet | resnet152 | inception_v3");
  model->add_option("--size", size, "input resolution");
  model->add_option("--batch", batch, "batch size");
  model->add_option("--steps", steps, "training steps to time");

  CLI11_PARSE(app, argc, argv);

  try {
    if (kernels->parsed()) return run_kernels(reps);
    return run_model(arch, size, batch, steps);
  } catch (const cxr::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
}
