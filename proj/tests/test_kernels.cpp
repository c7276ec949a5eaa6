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

#include <omp.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "cxr/kernels.hpp"
#include "cxr/kernels_ref.hpp"
#include "cxr/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using cxr::Rng;
using cxr::kern::ConvGeom;
using cxr::kern::ConvScratch;
using cxr::kern::i64;
using cxrtest::dot;
using cxrtest::max_abs_diff;
using cxrtest::max_rel_diff;
using cxrtest::randu;
using cxrtest::to_double;

namespace ref = cxr::kern::ref;

TEST_SUITE_BEGIN("kernels");

TEST_CASE("gemm matches the serial reference for every transpose pair") {
  Rng rng(11);
  const i64 m = 17, n = 23, k = 31;
  for (const bool ta : {false, true}) {
    for (const bool tb : {false, true}) {
      const i64 lda = ta ? m : k;
      const i64 ldb = tb ? k : n;
      const auto a = randu(ta ? k * m : m * k, rng);
      const auto b = randu(tb ? n * k : k * n, rng);
      auto c = randu(m * n, rng);
      auto want = c;
      cxr::kern::gemm(ta, tb, m, n, k, 0.75f, a.data(), lda, b.data(), ldb,
                      0.5f, c.data(), n);
      ref::gemm<float>(ta, tb, m, n, k, 0.75f, a.data(), lda, b.data(), ldb,
                       0.5f, want.data(), n);
      CAPTURE(ta);
      CAPTURE(tb);
      CHECK(max_rel_diff(c, want) < 1e-5);
    }
  }
}

TEST_CASE("gemm_builtin matches the serial reference") {
  Rng rng(12);
  const i64 m = 33, n = 65, k = 300;  // spans several k-blocks
  for (const bool ta : {false, true}) {
    for (const bool tb : {false, true}) {
      const i64 lda = ta ? m : k;
      const i64 ldb = tb ? k : n;
      const auto a = randu(m * k, rng);
      const auto b = randu(k * n, rng);
      std::vector<float> c(m * n, 7.0f), want(m * n, 7.0f);
      cxr::kern::gemm_builtin(ta, tb, m, n, k, 1.0f, a.data(), lda, b.data(),
                              ldb, 0.0f, c.data(), n);
      ref::gemm<float>(ta, tb, m, n, k, 1.0f, a.data(), lda, b.data(), ldb,
                       0.0f, want.data(), n);
      CHECK(max_rel_diff(c, want) < 1e-5);
    }
  }
}

TEST_CASE("gemm beta accumulates into the destination") {
  Rng rng(13);
  const i64 m = 5, n = 7, k = 9;
  const auto a = randu(m * k, rng);
  const auto b = randu(k * n, rng);
  const auto c0 = randu(m * n, rng);

  auto c = c0;
  cxr::kern::gemm(false, false, m, n, k, 1.0f, a.data(), k, b.data(), n, 1.0f,
                  c.data(), n);
  std::vector<float> prod(m * n, 0.0f);
  ref::gemm<float>(false, false, m, n, k, 1.0f, a.data(), k, b.data(), n, 0.0f,
                   prod.data(), n);
  for (i64 i = 0; i < m * n; ++i) {
    CHECK(c[i] == doctest::Approx(c0[i] + prod[i]).epsilon(1e-4));
  }
}

namespace {

struct ConvCase {
  const char* name;
  ConvGeom g;
  i64 b, h, w;
};

std::vector<ConvCase> conv_cases() {
  return {
      {"3x3 pad1", {.in_c = 3, .out_c = 8, .kh = 3, .kw = 3, .sh = 1, .sw = 1, .ph = 1, .pw = 1}, 2, 11, 13},
      {"7x7 stride2 pad3", {.in_c = 3, .out_c = 6, .kh = 7, .kw = 7, .sh = 2, .sw = 2, .ph = 3, .pw = 3}, 2, 17, 19},
      {"1x1", {.in_c = 8, .out_c = 4, .kh = 1, .kw = 1, .sh = 1, .sw = 1, .ph = 0, .pw = 0}, 3, 9, 7},
      {"1x7 asym pad", {.in_c = 4, .out_c = 5, .kh = 1, .kw = 7, .sh = 1, .sw = 1, .ph = 0, .pw = 3}, 2, 8, 10},
      {"7x1 asym pad", {.in_c = 4, .out_c = 5, .kh = 7, .kw = 1, .sh = 1, .sw = 1, .ph = 3, .pw = 0}, 2, 10, 8},
      {"3x3 stride2 nopad", {.in_c = 5, .out_c = 7, .kh = 3, .kw = 3, .sh = 2, .sw = 2, .ph = 0, .pw = 0}, 2, 9, 8},
  };
}

}  // namespace

TEST_CASE("conv2d forward matches direct-loop convolution") {
  Rng rng(21);
  for (const auto& tc : conv_cases()) {
    CAPTURE(tc.name);
    const auto& g = tc.g;
    const i64 s = g.out_h(tc.h) * g.out_w(tc.w);
    const auto x = randu(tc.b * g.in_c * tc.h * tc.w, rng);
    const auto w = randu(g.out_c * g.in_c * g.kh * g.kw, rng);
    const auto bias = randu(g.out_c, rng);
    std::vector<float> y(tc.b * g.out_c * s), want(y.size());
    ConvScratch scr;
    cxr::kern::conv2d_forward(x.data(), tc.b, tc.h, tc.w, w.data(), bias.data(),
                              y.data(), g, scr);
    ref::conv2d_forward<float>(x.data(), tc.b, tc.h, tc.w, w.data(),
                               bias.data(), want.data(), g);
    CHECK(max_rel_diff(y, want) < 1e-5);
  }
}

TEST_CASE("convolution chunks large batches without changing results") {
  Rng rng(22);
  const ConvGeom g{.in_c = 4, .out_c = 6, .kh = 3, .kw = 3, .sh = 1, .sw = 1, .ph = 1, .pw = 1};
  const i64 b = 5, h = 10, w = 12, s = h * w;
  const auto x = randu(b * g.in_c * h * w, rng);
  const auto wt = randu(g.out_c * g.in_c * 9, rng);
  const auto bias = randu(g.out_c, rng);

  std::vector<float> whole(b * g.out_c * s);
  ConvScratch scr;
  cxr::kern::conv2d_forward(x.data(), b, h, w, wt.data(), bias.data(),
                            whole.data(), g, scr);

  // Shrink the scratch cap so the same call is forced through 2-image chunks,
  // then restore it.
  const i64 old_cap = cxr::kern::detail::col_cap_elems();
  cxr::kern::detail::set_col_cap_elems(g.in_c * 9 * s * 2);
  std::vector<float> chunked(whole.size());
  ConvScratch scr2;
  cxr::kern::conv2d_forward(x.data(), b, h, w, wt.data(), bias.data(),
                            chunked.data(), g, scr2);

  const auto dy = randu(b * g.out_c * s, rng);
  std::vector<float> dx_chunked(x.size());
  std::vector<float> dw_chunked(wt.size(), 0.0f), db_chunked(g.out_c, 0.0f);
  cxr::kern::conv2d_backward_input(dy.data(), b, h, w, wt.data(),
                                   dx_chunked.data(), g, scr2);
  cxr::kern::conv2d_backward_weights(x.data(), dy.data(), b, h, w,
                                     dw_chunked.data(), db_chunked.data(), g,
                                     scr2);
  cxr::kern::detail::set_col_cap_elems(old_cap);

  std::vector<float> dx(x.size());
  std::vector<float> dw(wt.size(), 0.0f), db(g.out_c, 0.0f);
  cxr::kern::conv2d_backward_input(dy.data(), b, h, w, wt.data(), dx.data(), g, scr);
  cxr::kern::conv2d_backward_weights(x.data(), dy.data(), b, h, w, dw.data(),
                                     db.data(), g, scr);

  CHECK(max_abs_diff(whole, chunked) == 0.0);
  CHECK(max_abs_diff(dx, dx_chunked) == 0.0);
  // dw accumulates across chunk boundaries, which regroups the summation;
  // only equality up to rounding is promised there.
  CHECK(max_rel_diff(dw, dw_chunked) < 1e-5);
  CHECK(max_abs_diff(db, db_chunked) == 0.0);
}

TEST_CASE("conv2d backward input matches direct-loop reference") {
  Rng rng(23);
  for (const auto& tc : conv_cases()) {
    CAPTURE(tc.name);
    const auto& g = tc.g;
    const i64 s = g.out_h(tc.h) * g.out_w(tc.w);
    const auto w = randu(g.out_c * g.in_c * g.kh * g.kw, rng);
    const auto dy = randu(tc.b * g.out_c * s, rng);
    std::vector<float> dx(tc.b * g.in_c * tc.h * tc.w), want(dx.size());
    ConvScratch scr;
    cxr::kern::conv2d_backward_input(dy.data(), tc.b, tc.h, tc.w, w.data(),
                                     dx.data(), g, scr);
    ref::conv2d_backward_input<float>(dy.data(), tc.b, tc.h, tc.w, w.data(),
                                      want.data(), g);
    CHECK(max_rel_diff(dx, want) < 1e-5);
  }
}

TEST_CASE("conv2d backward weights accumulates and matches the reference") {
  Rng rng(24);
  const auto tc = conv_cases()[1];  // 7x7 stride2 pad3
  const auto& g = tc.g;
  const i64 s = g.out_h(tc.h) * g.out_w(tc.w);
  const i64 nw = g.out_c * g.in_c * g.kh * g.kw;
  const auto x = randu(tc.b * g.in_c * tc.h * tc.w, rng);
  const auto dy = randu(tc.b * g.out_c * s, rng);

  std::vector<float> dw(nw, 0.0f), db(g.out_c, 0.0f);
  std::vector<float> want_dw(nw, 0.0f), want_db(g.out_c, 0.0f);
  ConvScratch scr;
  cxr::kern::conv2d_backward_weights(x.data(), dy.data(), tc.b, tc.h, tc.w,
                                     dw.data(), db.data(), g, scr);
  ref::conv2d_backward_weights<float>(x.data(), dy.data(), tc.b, tc.h, tc.w,
                                      want_dw.data(), want_db.data(), g);
  CHECK(max_rel_diff(dw, want_dw) < 1e-4);
  CHECK(max_rel_diff(db, want_db) < 1e-4);

  // Second call adds on top instead of overwriting.
  cxr::kern::conv2d_backward_weights(x.data(), dy.data(), tc.b, tc.h, tc.w,
                                     dw.data(), db.data(), g, scr);
  for (i64 i = 0; i < nw; ++i) {
    CHECK(dw[i] == doctest::Approx(2.0f * want_dw[i]).epsilon(1e-3));
  }
}

TEST_CASE("im2col and col2im are adjoint maps") {
  Rng rng(25);
  const ConvGeom g{.in_c = 3, .out_c = 1, .kh = 3, .kw = 3, .sh = 2, .sw = 2, .ph = 1, .pw = 1};
  const i64 h = 11, w = 9;
  const i64 rows = g.in_c * g.kh * g.kw;
  const i64 s = g.out_h(h) * g.out_w(w);
  const auto x = randu(g.in_c * h * w, rng);
  const auto c = randu(rows * s, rng);

  std::vector<float> col(rows * s, 0.0f);
  cxr::kern::im2col(x.data(), h, w, g, col.data(), s, 0);
  std::vector<float> back(x.size(), 0.0f);
  cxr::kern::col2im(c.data(), h, w, g, back.data(), s, 0);

  // <im2col(x), c> must equal <x, col2im(c)>.
  CHECK(dot(col, c) == doctest::Approx(dot(x, back)).epsilon(1e-5));
}

TEST_CASE("maxpool matches reference and keeps the first of tied maxima") {
  Rng rng(31);
  const i64 b = 2, c = 3, h = 9, w = 11;
  const auto x = randu(b * c * h * w, rng);
  const i64 oh = (h + 2 - 3) / 2 + 1, ow = (w + 2 - 3) / 2 + 1;
  std::vector<float> y(b * c * oh * ow), want(y.size());
  std::vector<i64> idx(y.size()), want_idx(y.size());
  cxr::kern::maxpool_forward(x.data(), b, c, h, w, 3, 3, 2, 2, 1, 1, y.data(), idx.data());
  ref::maxpool_forward<float>(x.data(), b, c, h, w, 3, 3, 2, 2, 1, 1,
                              want.data(), want_idx.data());
  CHECK(max_abs_diff(y, want) == 0.0);
  CHECK(idx == want_idx);

  // Constant plane: every window ties, the first cell in scan order wins.
  std::vector<float> flat(h * w, 2.5f);
  std::vector<float> fy(oh * ow);
  std::vector<i64> fidx(oh * ow);
  cxr::kern::maxpool_forward(flat.data(), 1, 1, h, w, 3, 3, 2, 2, 1, 1,
                             fy.data(), fidx.data());
  for (i64 oy = 0; oy < oh; ++oy)
    for (i64 ox = 0; ox < ow; ++ox) {
      const i64 y0 = std::max<i64>(oy * 2 - 1, 0);
      const i64 x0 = std::max<i64>(ox * 2 - 1, 0);
      CHECK(fidx[oy * ow + ox] == y0 * w + x0);
    }
}

TEST_CASE("maxpool backward routes each gradient to its argmax") {
  Rng rng(32);
  const i64 b = 1, c = 2, h = 6, w = 6;
  const auto x = randu(b * c * h * w, rng);
  const i64 oh = 3, ow = 3;
  std::vector<float> y(b * c * oh * ow);
  std::vector<i64> idx(y.size());
  cxr::kern::maxpool_forward(x.data(), b, c, h, w, 2, 2, 2, 2, 0, 0, y.data(), idx.data());

  const auto dy = randu(b * c * oh * ow, rng);
  std::vector<float> dx(x.size());
  cxr::kern::maxpool_backward(dy.data(), idx.data(), b, c, oh, ow, h, w, dx.data());

  // Non-overlapping windows: dx holds each dy exactly once, zeros elsewhere.
  CHECK(cxr::kern::sum(dx.data(), dx.size()) ==
        doctest::Approx(cxr::kern::sum(dy.data(), dy.size())).epsilon(1e-6));
  for (i64 p = 0; p < b * c; ++p)
    for (i64 i = 0; i < oh * ow; ++i)
      CHECK(dx[p * h * w + idx[p * oh * ow + i]] == dy[p * oh * ow + i]);
}

TEST_CASE("avgpool counts padded cells in the divisor") {
  // 2x2 input, 2x2 kernel, stride 1, pad 1: corner windows see one real cell.
  const std::vector<float> x = {1.0f, 2.0f, 3.0f, 4.0f};
  std::vector<float> y(9);
  cxr::kern::avgpool_forward(x.data(), 1, 1, 2, 2, 2, 2, 1, 1, 1, 1, y.data());
  CHECK(y[0] == doctest::Approx(1.0f / 4.0f));          // window {1}
  CHECK(y[1] == doctest::Approx((1.0f + 2.0f) / 4.0f)); // window {1,2}
  CHECK(y[4] == doctest::Approx((1.0f + 2.0f + 3.0f + 4.0f) / 4.0f));
  CHECK(y[8] == doctest::Approx(4.0f / 4.0f));

  Rng rng(33);
  const i64 b = 2, c = 3, h = 7, w = 8;
  const auto xr = randu(b * c * h * w, rng);
  const i64 oh = (h + 2 - 3) / 2 + 1, ow = (w + 2 - 3) / 2 + 1;
  std::vector<float> yr(b * c * oh * ow), want(yr.size());
  cxr::kern::avgpool_forward(xr.data(), b, c, h, w, 3, 3, 2, 2, 1, 1, yr.data());
  ref::avgpool_forward<float>(xr.data(), b, c, h, w, 3, 3, 2, 2, 1, 1, want.data());
  CHECK(max_rel_diff(yr, want) < 1e-6);
}

TEST_CASE("avgpool backward is the adjoint of its forward") {
  Rng rng(34);
  const i64 b = 2, c = 2, h = 7, w = 9;
  const i64 kh = 3, kw = 3, sh = 2, sw = 2, ph = 1, pw = 1;
  const i64 oh = (h + 2 * ph - kh) / sh + 1, ow = (w + 2 * pw - kw) / sw + 1;
  const auto x = randu(b * c * h * w, rng);
  const auto dy = randu(b * c * oh * ow, rng);
  std::vector<float> y(dy.size()), dx(x.size());
  cxr::kern::avgpool_forward(x.data(), b, c, h, w, kh, kw, sh, sw, ph, pw, y.data());
  cxr::kern::avgpool_backward(dy.data(), b, c, oh, ow, h, w, kh, kw, sh, sw,
                              ph, pw, dx.data());
  CHECK(dot(y, dy) == doctest::Approx(dot(x, dx)).epsilon(1e-5));
}

TEST_CASE("adaptive average pooling matches reference on uneven windows") {
  Rng rng(35);
  for (const auto [h, w, oh, ow] : {std::array<i64, 4>{5, 7, 3, 4},
                                    std::array<i64, 4>{8, 8, 4, 4},
                                    std::array<i64, 4>{6, 6, 1, 1},
                                    std::array<i64, 4>{7, 5, 7, 5}}) {
    CAPTURE(h);
    CAPTURE(oh);
    const i64 b = 2, c = 3;
    const auto x = randu(b * c * h * w, rng);
    std::vector<float> y(b * c * oh * ow), want(y.size());
    cxr::kern::adaptive_avgpool_forward(x.data(), b, c, h, w, oh, ow, y.data());
    ref::adaptive_avgpool_forward<float>(x.data(), b, c, h, w, oh, ow, want.data());
    CHECK(max_rel_diff(y, want) < 1e-6);
  }
}

TEST_CASE("adaptive average pooling backward is the adjoint of forward") {
  Rng rng(36);
  const i64 b = 2, c = 2, h = 5, w = 7, oh = 3, ow = 4;
  const auto x = randu(b * c * h * w, rng);
  const auto dy = randu(b * c * oh * ow, rng);
  std::vector<float> y(dy.size()), dx(x.size());
  cxr::kern::adaptive_avgpool_forward(x.data(), b, c, h, w, oh, ow, y.data());
  cxr::kern::adaptive_avgpool_backward(dy.data(), b, c, h, w, oh, ow, dx.data());
  CHECK(dot(y, dy) == doctest::Approx(dot(x, dx)).epsilon(1e-5));
}

TEST_CASE("batchnorm training normalizes and tracks running statistics") {
  Rng rng(41);
  const i64 b = 4, c = 3, h = 5, w = 6;
  const i64 m = b * h * w;
  const auto x = randu(b * c * h * w, rng, -2.0f, 5.0f);
  const auto gamma = randu(c, rng, 0.5f, 1.5f);
  const auto beta = randu(c, rng);
  std::vector<float> rm(c, 0.1f), rv(c, 0.9f);
  std::vector<float> y(x.size()), mean(c), invstd(c);
  auto rm2 = rm, rv2 = rv;
  cxr::kern::bn_forward_train(x.data(), b, c, h, w, gamma.data(), beta.data(),
                              rm.data(), rv.data(), 0.1f, 1e-5f, y.data(),
                              mean.data(), invstd.data());

  std::vector<float> want(x.size()), want_mean(c), want_invstd(c);
  ref::bn_forward_train<float>(x.data(), b, c, h, w, gamma.data(), beta.data(),
                               rm2.data(), rv2.data(), 0.1f, 1e-5f, want.data(),
                               want_mean.data(), want_invstd.data());
  CHECK(max_rel_diff(y, want) < 1e-5);
  CHECK(max_rel_diff(rm, rm2) < 1e-5);
  CHECK(max_rel_diff(rv, rv2) < 1e-5);

  // With gamma=1, beta=0 the output is standardized per channel.
  std::vector<float> ones(c, 1.0f), zeros(c, 0.0f);
  std::vector<float> rm3(c, 0.0f), rv3(c, 0.0f);
  std::vector<float> z(x.size());
  cxr::kern::bn_forward_train(x.data(), b, c, h, w, ones.data(), zeros.data(),
                              rm3.data(), rv3.data(), 1.0f, 1e-5f, z.data(),
                              mean.data(), invstd.data());
  for (i64 ch = 0; ch < c; ++ch) {
    double s1 = 0.0, s2 = 0.0;
    for (i64 i = 0; i < b; ++i)
      for (i64 j = 0; j < h * w; ++j) {
        const double v = z[(i * c + ch) * h * w + j];
        s1 += v;
        s2 += v * v;
      }
    CHECK(std::abs(s1 / m) < 1e-5);
    CHECK(s2 / m == doctest::Approx(1.0).epsilon(1e-3));
    // momentum=1 replaces the running stats with the batch statistics.
    CHECK(rv3[ch] == doctest::Approx(1.0f / (invstd[ch] * invstd[ch]) *
                                     static_cast<float>(m) / (m - 1))
                         .epsilon(1e-3));
  }
}

TEST_CASE("batchnorm eval applies the frozen affine transform") {
  Rng rng(42);
  const i64 b = 2, c = 4, h = 3, w = 3;
  const auto x = randu(b * c * h * w, rng);
  const auto gamma = randu(c, rng, 0.5f, 2.0f);
  const auto beta = randu(c, rng);
  const auto rm = randu(c, rng);
  const auto rv = randu(c, rng, 0.5f, 2.0f);
  std::vector<float> y(x.size());
  cxr::kern::bn_forward_eval(x.data(), b, c, h, w, gamma.data(), beta.data(),
                             rm.data(), rv.data(), 1e-5f, y.data());
  for (i64 i = 0; i < b; ++i)
    for (i64 ch = 0; ch < c; ++ch)
      for (i64 j = 0; j < h * w; ++j) {
        const i64 at = (i * c + ch) * h * w + j;
        const float want = gamma[ch] * (x[at] - rm[ch]) /
                               std::sqrt(rv[ch] + 1e-5f) + beta[ch];
        CHECK(y[at] == doctest::Approx(want).epsilon(1e-5));
      }
}

TEST_CASE("batchnorm training backward matches finite differences") {
  Rng rng(43);
  const i64 b = 3, c = 2, h = 4, w = 3;
  const i64 n = b * c * h * w;
  const auto xf = randu(n, rng, -1.5f, 1.5f);
  const auto gf = randu(c, rng, 0.5f, 1.5f);
  const auto bf = randu(c, rng);
  const auto lw = randu(n, rng);  // loss L = <lw, y>

  std::vector<float> y(n), mean(c), invstd(c), rm(c, 0.0f), rv(c, 0.0f);
  cxr::kern::bn_forward_train(xf.data(), b, c, h, w, gf.data(), bf.data(),
                              rm.data(), rv.data(), 0.1f, 1e-5f, y.data(),
                              mean.data(), invstd.data());
  std::vector<float> dx(n), dgamma(c, 0.0f), dbeta(c, 0.0f);
  cxr::kern::bn_backward_train(xf.data(), lw.data(), b, c, h, w, gf.data(),
                               mean.data(), invstd.data(), dx.data(),
                               dgamma.data(), dbeta.data());

  // Double-precision central differences through the reference forward.
  auto loss = [&](const std::vector<double>& x, const std::vector<double>& g,
                  const std::vector<double>& bb) {
    std::vector<double> yy(n), mm(c), ii(c), r1(c, 0.0), r2(c, 0.0);
    ref::bn_forward_train<double>(x.data(), b, c, h, w, g.data(), bb.data(),
                                  r1.data(), r2.data(), 0.1, 1e-5, yy.data(),
                                  mm.data(), ii.data());
    double acc = 0.0;
    for (i64 i = 0; i < n; ++i) acc += yy[i] * lw[i];
    return acc;
  };
  const auto xd = to_double(xf);
  const auto gd = to_double(gf);
  const auto bd = to_double(bf);
  const double eps = 1e-5;
  for (const i64 i : {i64(0), i64(n / 2), i64(n - 1)}) {
    auto xp = xd, xm = xd;
    xp[i] += eps;
    xm[i] -= eps;
    const double fd = (loss(xp, gd, bd) - loss(xm, gd, bd)) / (2 * eps);
    CHECK(dx[i] == doctest::Approx(fd).epsilon(5e-3));
  }
  for (i64 ch = 0; ch < c; ++ch) {
    auto gp = gd, gm = gd;
    gp[ch] += eps;
    gm[ch] -= eps;
    CHECK(dgamma[ch] ==
          doctest::Approx((loss(xd, gp, bd) - loss(xd, gm, bd)) / (2 * eps))
              .epsilon(5e-3));
    auto bp = bd, bm = bd;
    bp[ch] += eps;
    bm[ch] -= eps;
    CHECK(dbeta[ch] ==
          doctest::Approx((loss(xd, bd, bp) - loss(xd, bd, bm)) / (2 * eps))
              .epsilon(5e-3));
  }
}

TEST_CASE("batchnorm eval backward scales gradients per channel") {
  Rng rng(44);
  const i64 b = 2, c = 3, h = 2, w = 2;
  const auto dy = randu(b * c * h * w, rng);
  const auto gamma = randu(c, rng, 0.5f, 2.0f);
  const auto rv = randu(c, rng, 0.5f, 2.0f);
  std::vector<float> dx(dy.size());
  cxr::kern::bn_backward_eval(dy.data(), b, c, h, w, gamma.data(), rv.data(),
                              1e-5f, dx.data());
  for (i64 i = 0; i < b; ++i)
    for (i64 ch = 0; ch < c; ++ch)
      for (i64 j = 0; j < h * w; ++j) {
        const i64 at = (i * c + ch) * h * w + j;
        CHECK(dx[at] == doctest::Approx(dy[at] * gamma[ch] /
                                        std::sqrt(rv[ch] + 1e-5f)));
      }
}

TEST_CASE("elementwise ops compute exact pointwise results") {
  const std::vector<float> x = {-2.0f, -0.0f, 0.0f, 3.5f, 88.0f, -88.0f};
  std::vector<float> y(x.size());
  cxr::kern::relu_forward(x.data(), y.data(), x.size());
  CHECK(y == std::vector<float>{0.0f, 0.0f, 0.0f, 3.5f, 88.0f, 0.0f});

  std::vector<float> dy = {1.0f, 1.0f, 1.0f, 1.0f, 1.0f, 1.0f}, dx(x.size());
  cxr::kern::relu_backward(y.data(), dy.data(), dx.data(), x.size());
  CHECK(dx == std::vector<float>{0.0f, 0.0f, 0.0f, 1.0f, 1.0f, 0.0f});

  std::vector<float> sg(x.size());
  cxr::kern::sigmoid(x.data(), sg.data(), x.size());
  CHECK(sg[2] == doctest::Approx(0.5f));
  CHECK(sg[4] == doctest::Approx(1.0f));
  CHECK(sg[5] == doctest::Approx(0.0f));
  for (const float v : sg) CHECK(std::isfinite(v));

  std::vector<float> a = {1.0f, 2.0f}, bb = {10.0f, 20.0f}, out(2);
  cxr::kern::add(a.data(), bb.data(), out.data(), 2);
  CHECK(out == std::vector<float>{11.0f, 22.0f});
  cxr::kern::add_inplace(a.data(), bb.data(), 2);
  CHECK(a == std::vector<float>{11.0f, 22.0f});
  cxr::kern::scale(a.data(), 0.5f, 2);
  CHECK(a == std::vector<float>{5.5f, 11.0f});
}

TEST_CASE("dropout is a pure function of its key and preserves expectation") {
  Rng rng(51);
  const i64 n = 100000;
  const auto x = randu(n, rng, 1.0f, 1.0f);  // all ones
  std::vector<float> y1(n), y2(n), y3(n);
  cxr::kern::dropout_forward(x.data(), y1.data(), n, 0.5f, 777);
  cxr::kern::dropout_forward(x.data(), y2.data(), n, 0.5f, 777);
  cxr::kern::dropout_forward(x.data(), y3.data(), n, 0.5f, 778);
  CHECK(std::memcmp(y1.data(), y2.data(), n * sizeof(float)) == 0);
  CHECK(std::memcmp(y1.data(), y3.data(), n * sizeof(float)) != 0);

  // Survivors are scaled by 1/(1-p); the mean stays near 1.
  i64 kept = 0;
  for (const float v : y1) {
    CHECK((v == 0.0f || v == doctest::Approx(2.0f)));
    kept += v != 0.0f;
  }
  CHECK(std::abs(static_cast<double>(kept) / n - 0.5) < 0.01);

  // p = 0 is the identity.
  cxr::kern::dropout_forward(x.data(), y1.data(), n, 0.0f, 777);
  CHECK(std::memcmp(y1.data(), x.data(), n * sizeof(float)) == 0);

  // Backward re-derives the same mask.
  const auto g = randu(n, rng);
  std::vector<float> dx(n);
  cxr::kern::dropout_backward(g.data(), dx.data(), n, 0.5f, 777);
  for (i64 i = 0; i < n; ++i) {
    if (y2[i] == 0.0f) {
      CHECK(dx[i] == 0.0f);
    } else {
      CHECK(dx[i] == doctest::Approx(2.0f * g[i]));
    }
  }
}

TEST_CASE("linear layer matches the reference in all three directions") {
  Rng rng(52);
  const i64 b = 7, in = 13, out = 5;
  const auto x = randu(b * in, rng);
  const auto w = randu(out * in, rng);
  const auto bias = randu(out, rng);
  std::vector<float> y(b * out), want(b * out);
  cxr::kern::linear_forward(x.data(), b, in, out, w.data(), bias.data(), y.data());
  ref::linear_forward<float>(x.data(), b, in, out, w.data(), bias.data(), want.data());
  CHECK(max_rel_diff(y, want) < 1e-5);

  const auto dy = randu(b * out, rng);
  std::vector<float> dx(b * in);
  cxr::kern::linear_backward_input(dy.data(), b, in, out, w.data(), dx.data());
  std::vector<float> want_dx(b * in, 0.0f);
  ref::gemm<float>(false, false, b, in, out, 1.0f, dy.data(), out, w.data(), in,
                   0.0f, want_dx.data(), in);
  CHECK(max_rel_diff(dx, want_dx) < 1e-5);

  std::vector<float> dw(out * in, 0.0f), db(out, 0.0f);
  cxr::kern::linear_backward_params(x.data(), dy.data(), b, in, out, dw.data(), db.data());
  std::vector<float> want_dw(out * in, 0.0f);
  ref::gemm<float>(true, false, out, in, b, 1.0f, dy.data(), out, x.data(), in,
                   0.0f, want_dw.data(), in);
  CHECK(max_rel_diff(dw, want_dw) < 1e-5);
  for (i64 o = 0; o < out; ++o) {
    double acc = 0.0;
    for (i64 i = 0; i < b; ++i) acc += dy[i * out + o];
    CHECK(db[o] == doctest::Approx(acc).epsilon(1e-5));
  }

  // dw/db accumulate across calls.
  cxr::kern::linear_backward_params(x.data(), dy.data(), b, in, out, dw.data(), db.data());
  CHECK(dw[0] == doctest::Approx(2.0f * want_dw[0]).epsilon(1e-4));
}

TEST_CASE("bilinear resize uses half-pixel centers and clamps edges") {
  // 1x1x2 row [0, 1] widened to 4: sample centers fall at -0.25, .25, .75, 1.25.
  const std::vector<float> row = {0.0f, 1.0f};
  std::vector<float> wide(4);
  cxr::kern::resize_bilinear(row.data(), 1, 1, 2, wide.data(), 1, 4);
  CHECK(wide[0] == doctest::Approx(0.0f));
  CHECK(wide[1] == doctest::Approx(0.25f));
  CHECK(wide[2] == doctest::Approx(0.75f));
  CHECK(wide[3] == doctest::Approx(1.0f));

  Rng rng(53);
  const i64 c = 3, h = 7, w = 9;
  const auto x = randu(c * h * w, rng);

  // Same size is the identity.
  std::vector<float> same(x.size());
  cxr::kern::resize_bilinear(x.data(), c, h, w, same.data(), h, w);
  CHECK(max_abs_diff(x, same) == 0.0);

  std::vector<float> up(c * 13 * 4), want(c * 13 * 4);
  cxr::kern::resize_bilinear(x.data(), c, h, w, up.data(), 13, 4);
  ref::resize_bilinear<float>(x.data(), c, h, w, want.data(), 13, 4);
  CHECK(max_rel_diff(up, want) < 1e-6);
}

TEST_CASE("horizontal flip and crop index correctly") {
  Rng rng(54);
  const i64 c = 2, h = 4, w = 5;
  const auto x = randu(c * h * w, rng);
  std::vector<float> once(x.size()), twice(x.size());
  cxr::kern::flip_horizontal(x.data(), c, h, w, once.data());
  cxr::kern::flip_horizontal(once.data(), c, h, w, twice.data());
  CHECK(max_abs_diff(x, twice) == 0.0);
  CHECK(once[0] == x[w - 1]);

  std::vector<float> patch(c * 2 * 3);
  cxr::kern::crop(x.data(), c, h, w, 1, 2, 2, 3, patch.data());
  for (i64 ch = 0; ch < c; ++ch)
    for (i64 iy = 0; iy < 2; ++iy)
      for (i64 ix = 0; ix < 3; ++ix)
        CHECK(patch[(ch * 2 + iy) * 3 + ix] == x[(ch * h + 1 + iy) * w + 2 + ix]);
}

TEST_CASE("adam applies the bias-corrected update") {
  // Step 1, g constant: mhat = g, vhat = g*g, so p moves by lr*g/(|g|+eps).
  std::vector<float> p = {1.0f, -2.0f}, g = {0.5f, -3.0f};
  std::vector<float> m(2, 0.0f), v(2, 0.0f);
  cxr::kern::adam_step(p.data(), g.data(), m.data(), v.data(), 2, 1, 0.1f,
                       0.9f, 0.999f, 1e-8f);
  CHECK(p[0] == doctest::Approx(1.0f - 0.1f * 0.5f / (0.5f + 1e-8f)).epsilon(1e-5));
  CHECK(p[1] == doctest::Approx(-2.0f + 0.1f * 3.0f / (3.0f + 1e-8f)).epsilon(1e-5));

  // Step 2 against a transliterated double-precision model.
  cxr::kern::adam_step(p.data(), g.data(), m.data(), v.data(), 2, 2, 0.1f,
                       0.9f, 0.999f, 1e-8f);
  double md = 0.0, vd = 0.0, pd = 1.0;
  for (int t = 1; t <= 2; ++t) {
    md = 0.9 * md + 0.1 * 0.5;
    vd = 0.999 * vd + 0.001 * 0.25;
    const double mh = md / (1.0 - std::pow(0.9, t));
    const double vh = vd / (1.0 - std::pow(0.999, t));
    pd -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(p[0] == doctest::Approx(pd).epsilon(1e-5));
}

TEST_CASE("reductions sum in order and detect non-finite values") {
  std::vector<float> x(1000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i);
  CHECK(cxr::kern::sum(x.data(), x.size()) == doctest::Approx(999.0 * 1000.0 / 2.0));
  CHECK(cxr::kern::all_finite(x.data(), x.size()));
  x[997] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(cxr::kern::all_finite(x.data(), x.size()));
  x[997] = std::numeric_limits<float>::infinity();
  CHECK_FALSE(cxr::kern::all_finite(x.data(), x.size()));
}

TEST_CASE("parallel kernels are bitwise stable across thread counts") {
  Rng rng(61);
  const ConvGeom g{.in_c = 6, .out_c = 9, .kh = 3, .kw = 3, .sh = 1, .sw = 1, .ph = 1, .pw = 1};
  const i64 b = 3, h = 12, w = 10, s = h * w;
  const auto x = randu(b * g.in_c * h * w, rng);
  const auto wt = randu(g.out_c * g.in_c * 9, rng);
  const auto bias = randu(g.out_c, rng);
  const auto dy = randu(b * g.out_c * s, rng);
  const auto gamma = randu(g.out_c, rng, 0.5f, 1.5f);
  const auto beta = randu(g.out_c, rng);
  const auto ga = randu(64 * 80, rng);
  const auto gb = randu(80 * 48, rng);

  struct Run {
    std::vector<float> y, dx, dw, db, bn, bn_dx, bn_dg, bn_db, gm;
  };
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    Run r;
    r.y.resize(b * g.out_c * s);
    ConvScratch scr;
    cxr::kern::conv2d_forward(x.data(), b, h, w, wt.data(), bias.data(),
                              r.y.data(), g, scr);
    r.dx.resize(x.size());
    cxr::kern::conv2d_backward_input(dy.data(), b, h, w, wt.data(), r.dx.data(), g, scr);
    r.dw.assign(wt.size(), 0.0f);
    r.db.assign(g.out_c, 0.0f);
    cxr::kern::conv2d_backward_weights(x.data(), dy.data(), b, h, w,
                                       r.dw.data(), r.db.data(), g, scr);
    r.bn.resize(r.y.size());
    std::vector<float> rm(g.out_c, 0.0f), rv(g.out_c, 1.0f), mean(g.out_c),
        invstd(g.out_c);
    cxr::kern::bn_forward_train(r.y.data(), b, g.out_c, h, w, gamma.data(),
                                beta.data(), rm.data(), rv.data(), 0.1f, 1e-5f,
                                r.bn.data(), mean.data(), invstd.data());
    r.bn_dx.resize(r.y.size());
    r.bn_dg.assign(g.out_c, 0.0f);
    r.bn_db.assign(g.out_c, 0.0f);
    cxr::kern::bn_backward_train(r.y.data(), dy.data(), b, g.out_c, h, w,
                                 gamma.data(), mean.data(), invstd.data(),
                                 r.bn_dx.data(), r.bn_dg.data(), r.bn_db.data());
    r.gm.assign(64 * 48, 0.0f);
    cxr::kern::gemm_builtin(false, false, 64, 48, 80, 1.0f, ga.data(), 80,
                            gb.data(), 48, 0.0f, r.gm.data(), 48);
    return r;
  };

  const int base_threads = omp_get_max_threads();
  const Run r1 = run(1);
  const Run r3 = run(3);
  const Run r7 = run(7);
  omp_set_num_threads(base_threads);

  auto same = [](const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
  };
  for (const Run* r : {&r3, &r7}) {
    CHECK(same(r1.y, r->y));
    CHECK(same(r1.dx, r->dx));
    CHECK(same(r1.dw, r->dw));
    CHECK(same(r1.db, r->db));
    CHECK(same(r1.bn, r->bn));
    CHECK(same(r1.bn_dx, r->bn_dx));
    CHECK(same(r1.bn_dg, r->bn_dg));
    CHECK(same(r1.bn_db, r->bn_db));
    CHECK(same(r1.gm, r->gm));
  }
}

TEST_SUITE_END();
