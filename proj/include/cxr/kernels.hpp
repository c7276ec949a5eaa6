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

#pragma once

#include <cstdint>
#include <vector>

namespace cxr::kern {

// OpenMP-parallel float32 kernels behind all layer math. Work is partitioned
// so that every output element is accumulated by exactly one thread in a
// fixed order: results are bitwise reproducible for any thread count.
// cxr::kern::ref holds the serial reference implementations the tests and
// the bench target compare against.

using i64 = std::int64_t;

struct ConvGeom {
  i64 in_c = 0, out_c = 0;
  i64 kh = 1, kw = 1;
  i64 sh = 1, sw = 1;
  i64 ph = 0, pw = 0;

  i64 out_h(i64 h) const { return (h + 2 * ph - kh) / sh + 1; }
  i64 out_w(i64 w) const { return (w + 2 * pw - kw) / sw + 1; }
};

/// Reused scratch for im2col-based convolution. One per conv layer.
struct ConvScratch {
  std::vector<float> col;
  std::vector<float> tmp;
};

// ---- GEMM ----------------------------------------------------------------
// C(M,N) = alpha * op(A) * op(B) + beta * C, row-major.

/// Dispatches to OpenBLAS when built with CXR_WITH_OPENBLAS, else to the
/// built-in blocked kernel.
void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, float alpha,
          const float* a, i64 lda, const float* b, i64 ldb, float beta,
          float* c, i64 ldc);

/// Built-in blocked OpenMP GEMM; always compiled so it stays tested.
void gemm_builtin(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, float alpha,
                  const float* a, i64 lda, const float* b, i64 ldb, float beta,
                  float* c, i64 ldc);

// ---- Convolution (im2col + GEMM) ------------------------------------------

/// col has geom.in_c*kh*kw rows; each row holds ld_col values and the patch
/// for output position s of this image lands at column col_off + s.
void im2col(const float* im, i64 h, i64 w, const ConvGeom& g, float* col,
            i64 ld_col, i64 col_off);

/// Scatter-add transpose of im2col into `im` (not zeroed here).
void col2im(const float* col, i64 h, i64 w, const ConvGeom& g, float* im,
            i64 ld_col, i64 col_off);

/// x: (B, in_c, H, W), w: (out_c, in_c*kh*kw), bias: out_c or nullptr,
/// y: (B, out_c, OH, OW).
void conv2d_forward(const float* x, i64 b, i64 h, i64 w_in, const float* w,
                    const float* bias, float* y, const ConvGeom& g,
                    ConvScratch& s);

/// dx is overwritten.
void conv2d_backward_input(const float* dy, i64 b, i64 h, i64 w_in,
                           const float* w, float* dx, const ConvGeom& g,
                           ConvScratch& s);

/// dw (out_c, in_c*kh*kw) and db (out_c) are accumulated into.
void conv2d_backward_weights(const float* x, const float* dy, i64 b, i64 h,
                             i64 w_in, float* dw, float* db, const ConvGeom& g,
                             ConvScratch& s);

// ---- Pooling ---------------------------------------------------------------

/// idx stores, per output element, the flat offset of the max within its
/// input plane (ties: first in scan order).
void maxpool_forward(const float* x, i64 b, i64 c, i64 h, i64 w, i64 kh, i64 kw,
                     i64 sh, i64 sw, i64 ph, i64 pw, float* y, i64* idx);
void maxpool_backward(const float* dy, const i64* idx, i64 b, i64 c, i64 oh,
                      i64 ow, i64 h, i64 w, float* dx);

/// Count-include-pad semantics: divisor is always kh*kw.
void avgpool_forward(const float* x, i64 b, i64 c, i64 h, i64 w, i64 kh, i64 kw,
                     i64 sh, i64 sw, i64 ph, i64 pw, float* y);
void avgpool_backward(const float* dy, i64 b, i64 c, i64 oh, i64 ow, i64 h,
                      i64 w, i64 kh, i64 kw, i64 sh, i64 sw, i64 ph, i64 pw,
                      float* dx);

void adaptive_avgpool_forward(const float* x, i64 b, i64 c, i64 h, i64 w,
                              i64 oh, i64 ow, float* y);
void adaptive_avgpool_backward(const float* dy, i64 b, i64 c, i64 h, i64 w,
                               i64 oh, i64 ow, float* dx);

// ---- BatchNorm (per channel over N*H*W) ------------------------------------

/// Running stats updated in place with `momentum`; the variance fed to the
/// running average is the unbiased estimate.
void bn_forward_train(const float* x, i64 b, i64 c, i64 h, i64 w,
                      const float* gamma, const float* beta, float* running_mean,
                      float* running_var, float momentum, float eps, float* y,
                      float* save_mean, float* save_invstd);
void bn_forward_eval(const float* x, i64 b, i64 c, i64 h, i64 w,
                     const float* gamma, const float* beta,
                     const float* running_mean, const float* running_var,
                     float eps, float* y);
/// dgamma/dbeta accumulated; dx overwritten.
void bn_backward_train(const float* x, const float* dy, i64 b, i64 c, i64 h,
                       i64 w, const float* gamma, const float* save_mean,
                       const float* save_invstd, float* dx, float* dgamma,
                       float* dbeta);
/// Backward when forward used running stats (frozen BN, explanation passes).
void bn_backward_eval(const float* dy, i64 b, i64 c, i64 h, i64 w,
                      const float* gamma, const float* running_var, float eps,
                      float* dx);

// ---- Elementwise -----------------------------------------------------------

void relu_forward(const float* x, float* y, i64 n);
void relu_backward(const float* y, const float* dy, float* dx, i64 n);
void sigmoid(const float* x, float* y, i64 n);
void add(const float* a, const float* b, float* y, i64 n);
void add_inplace(float* a, const float* b, i64 n);
void scale(float* x, float v, i64 n);

/// Inverted dropout; the mask is re-derived from (key, index), so backward
/// needs no stored state.
void dropout_forward(const float* x, float* y, i64 n, float p, std::uint64_t key);
void dropout_backward(const float* dy, float* dx, i64 n, float p, std::uint64_t key);

void bias_add_rows(float* y, const float* bias, i64 rows, i64 cols);
void bias_add_channels(float* y, const float* bias, i64 b, i64 c, i64 spatial);

// ---- Linear ----------------------------------------------------------------
// x: (B, in), w: (out, in), y: (B, out).

void linear_forward(const float* x, i64 b, i64 in, i64 out, const float* w,
                    const float* bias, float* y);
void linear_backward_input(const float* dy, i64 b, i64 in, i64 out,
                           const float* w, float* dx);
void linear_backward_params(const float* x, const float* dy, i64 b, i64 in,
                            i64 out, float* dw, float* db);

// ---- Resampling ------------------------------------------------------------

/// Half-pixel-centers bilinear resize of a CHW tensor.
void resize_bilinear(const float* src, i64 c, i64 h, i64 w, float* dst, i64 oh,
                     i64 ow);
void flip_horizontal(const float* x, i64 c, i64 h, i64 w, float* y);
void crop(const float* x, i64 c, i64 h, i64 w, i64 top, i64 left, i64 ch,
          i64 cw, float* y);

// ---- Optimizer / reductions -------------------------------------------------

/// One Adam update with bias correction at step t (1-based).
void adam_step(float* p, const float* g, float* m, float* v, i64 n, i64 t,
               float lr, float beta1, float beta2, float eps);

double sum(const float* x, i64 n);
bool all_finite(const float* x, i64 n);

namespace detail {
/// im2col scratch cap in elements; tests shrink it to force batch chunking.
void set_col_cap_elems(i64 elems);
i64 col_cap_elems();
}  // namespace detail

}  // namespace cxr::kern
