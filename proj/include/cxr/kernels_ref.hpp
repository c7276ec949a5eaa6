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
// Serial reference kernels.
//
// These are the ground truth the parallel kernels are tested against. They
// are deliberately written as plain nested loops over the textbook
// definitions (convolution is a direct 7-loop sum, not im2col+GEMM) so the
// two implementations share no algorithmic structure. Everything is
// templated on the scalar type: instantiating with double gives the
// high-precision oracle used by finite-difference gradient checks.
//
// Nothing here is performance-sensitive; clarity wins every trade-off.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "cxr/kernels.hpp"

namespace cxr::kern::ref {

using i64 = std::int64_t;

template <typename T>
void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, T alpha, const T* a,
          i64 lda, const T* b, i64 ldb, T beta, T* c, i64 ldc) {
  for (i64 i = 0; i < m; ++i) {
    for (i64 j = 0; j < n; ++j) {
      T acc = 0;
      for (i64 p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const T bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      c[i * ldc + j] = alpha * acc + beta * (beta == T(0) ? T(0) : c[i * ldc + j]);
    }
  }
}

// y[b,oc,oy,ox] = bias[oc] + sum_{ic,ki,kj} x[b,ic,iy,ix] * w[oc,ic,ki,kj]
template <typename T>
void conv2d_forward(const T* x, i64 b, i64 h, i64 w_in, const T* w,
                    const T* bias, T* y, const ConvGeom& g) {
  const i64 oh = g.out_h(h), ow = g.out_w(w_in);
  for (i64 i = 0; i < b; ++i)
    for (i64 oc = 0; oc < g.out_c; ++oc)
      for (i64 oy = 0; oy < oh; ++oy)
        for (i64 ox = 0; ox < ow; ++ox) {
          T acc = bias ? bias[oc] : T(0);
          for (i64 ic = 0; ic < g.in_c; ++ic)
            for (i64 ki = 0; ki < g.kh; ++ki)
              for (i64 kj = 0; kj < g.kw; ++kj) {
                const i64 iy = oy * g.sh - g.ph + ki;
                const i64 ix = ox * g.sw - g.pw + kj;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w_in) continue;
                acc += x[((i * g.in_c + ic) * h + iy) * w_in + ix] *
                       w[((oc * g.in_c + ic) * g.kh + ki) * g.kw + kj];
              }
          y[((i * g.out_c + oc) * oh + oy) * ow + ox] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const T* dy, i64 b, i64 h, i64 w_in, const T* w,
                           T* dx, const ConvGeom& g) {
  const i64 oh = g.out_h(h), ow = g.out_w(w_in);
  std::fill(dx, dx + b * g.in_c * h * w_in, T(0));
  for (i64 i = 0; i < b; ++i)
    for (i64 oc = 0; oc < g.out_c; ++oc)
      for (i64 oy = 0; oy < oh; ++oy)
        for (i64 ox = 0; ox < ow; ++ox) {
          const T gv = dy[((i * g.out_c + oc) * oh + oy) * ow + ox];
          for (i64 ic = 0; ic < g.in_c; ++ic)
            for (i64 ki = 0; ki < g.kh; ++ki)
              for (i64 kj = 0; kj < g.kw; ++kj) {
                const i64 iy = oy * g.sh - g.ph + ki;
                const i64 ix = ox * g.sw - g.pw + kj;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w_in) continue;
                dx[((i * g.in_c + ic) * h + iy) * w_in + ix] +=
                    gv * w[((oc * g.in_c + ic) * g.kh + ki) * g.kw + kj];
              }
        }
}

// dw and db accumulate (caller zeroes between optimizer steps).
template <typename T>
void conv2d_backward_weights(const T* x, const T* dy, i64 b, i64 h, i64 w_in,
                             T* dw, T* db, const ConvGeom& g) {
  const i64 oh = g.out_h(h), ow = g.out_w(w_in);
  for (i64 i = 0; i < b; ++i)
    for (i64 oc = 0; oc < g.out_c; ++oc)
      for (i64 oy = 0; oy < oh; ++oy)
        for (i64 ox = 0; ox < ow; ++ox) {
          const T gv = dy[((i * g.out_c + oc) * oh + oy) * ow + ox];
          if (db) db[oc] += gv;
          for (i64 ic = 0; ic < g.in_c; ++ic)
            for (i64 ki = 0; ki < g.kh; ++ki)
              for (i64 kj = 0; kj < g.kw; ++kj) {
                const i64 iy = oy * g.sh - g.ph + ki;
                const i64 ix = ox * g.sw - g.pw + kj;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w_in) continue;
                dw[((oc * g.in_c + ic) * g.kh + ki) * g.kw + kj] +=
                    gv * x[((i * g.in_c + ic) * h + iy) * w_in + ix];
              }
        }
}

template <typename T>
void maxpool_forward(const T* x, i64 b, i64 c, i64 h, i64 w, i64 kh, i64 kw,
                     i64 sh, i64 sw, i64 ph, i64 pw, T* y, i64* idx) {
  const i64 oh = (h + 2 * ph - kh) / sh + 1;
  const i64 ow = (w + 2 * pw - kw) / sw + 1;
  for (i64 p = 0; p < b * c; ++p) {
    const T* in = x + p * h * w;
    for (i64 oy = 0; oy < oh; ++oy)
      for (i64 ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        i64 best_i = -1;
        for (i64 ki = 0; ki < kh; ++ki)
          for (i64 kj = 0; kj < kw; ++kj) {
            const i64 iy = oy * sh - ph + ki;
            const i64 ix = ox * sw - pw + kj;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            if (best_i < 0 || in[iy * w + ix] > best) {
              best = in[iy * w + ix];
              best_i = iy * w + ix;
            }
          }
        y[p * oh * ow + oy * ow + ox] = best;
        if (idx) idx[p * oh * ow + oy * ow + ox] = best_i;
      }
  }
}

template <typename T>
void avgpool_forward(const T* x, i64 b, i64 c, i64 h, i64 w, i64 kh, i64 kw,
                     i64 sh, i64 sw, i64 ph, i64 pw, T* y) {
  const i64 oh = (h + 2 * ph - kh) / sh + 1;
  const i64 ow = (w + 2 * pw - kw) / sw + 1;
  for (i64 p = 0; p < b * c; ++p) {
    const T* in = x + p * h * w;
    for (i64 oy = 0; oy < oh; ++oy)
      for (i64 ox = 0; ox < ow; ++ox) {
        T acc = 0;
        for (i64 ki = 0; ki < kh; ++ki)
          for (i64 kj = 0; kj < kw; ++kj) {
            const i64 iy = oy * sh - ph + ki;
            const i64 ix = ox * sw - pw + kj;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            acc += in[iy * w + ix];
          }
        // Padded cells count toward the divisor (they contribute zero).
        y[p * oh * ow + oy * ow + ox] = acc / static_cast<T>(kh * kw);
      }
  }
}

template <typename T>
void adaptive_avgpool_forward(const T* x, i64 b, i64 c, i64 h, i64 w, i64 oh,
                              i64 ow, T* y) {
  for (i64 p = 0; p < b * c; ++p) {
    const T* in = x + p * h * w;
    for (i64 oy = 0; oy < oh; ++oy) {
      const i64 y0 = (oy * h) / oh;
      const i64 y1 = ((oy + 1) * h + oh - 1) / oh;
      for (i64 ox = 0; ox < ow; ++ox) {
        const i64 x0 = (ox * w) / ow;
        const i64 x1 = ((ox + 1) * w + ow - 1) / ow;
        T acc = 0;
        for (i64 iy = y0; iy < y1; ++iy)
          for (i64 ix = x0; ix < x1; ++ix) acc += in[iy * w + ix];
        y[p * oh * ow + oy * ow + ox] =
            acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
}

template <typename T>
void bn_forward_train(const T* x, i64 b, i64 c, i64 h, i64 w, const T* gamma,
                      const T* beta, T* running_mean, T* running_var,
                      T momentum, T eps, T* y, T* save_mean, T* save_invstd) {
  const i64 spatial = h * w;
  const i64 m = b * spatial;
  for (i64 ch = 0; ch < c; ++ch) {
    T s1 = 0;
    for (i64 i = 0; i < b; ++i)
      for (i64 j = 0; j < spatial; ++j) s1 += x[(i * c + ch) * spatial + j];
    const T mean = s1 / static_cast<T>(m);
    T s2 = 0;
    for (i64 i = 0; i < b; ++i)
      for (i64 j = 0; j < spatial; ++j) {
        const T d = x[(i * c + ch) * spatial + j] - mean;
        s2 += d * d;
      }
    const T var = s2 / static_cast<T>(m);
    const T invstd = T(1) / std::sqrt(var + eps);
    save_mean[ch] = mean;
    save_invstd[ch] = invstd;
    const T unbiased = m > 1 ? s2 / static_cast<T>(m - 1) : var;
    running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mean;
    running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
    for (i64 i = 0; i < b; ++i)
      for (i64 j = 0; j < spatial; ++j) {
        const i64 at = (i * c + ch) * spatial + j;
        y[at] = gamma[ch] * (x[at] - mean) * invstd + beta[ch];
      }
  }
}

template <typename T>
void relu_forward(const T* x, T* y, i64 n) {
  for (i64 i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void linear_forward(const T* x, i64 b, i64 in, i64 out, const T* w,
                    const T* bias, T* y) {
  for (i64 i = 0; i < b; ++i)
    for (i64 o = 0; o < out; ++o) {
      T acc = bias ? bias[o] : T(0);
      for (i64 j = 0; j < in; ++j) acc += x[i * in + j] * w[o * in + j];
      y[i * out + o] = acc;
    }
}

template <typename T>
void resize_bilinear(const T* src, i64 c, i64 h, i64 w, T* dst, i64 oh, i64 ow) {
  for (i64 ch = 0; ch < c; ++ch)
    for (i64 oy = 0; oy < oh; ++oy)
      for (i64 ox = 0; ox < ow; ++ox) {
        T sy = (static_cast<T>(oy) + T(0.5)) * static_cast<T>(h) /
                   static_cast<T>(oh) - T(0.5);
        T sx = (static_cast<T>(ox) + T(0.5)) * static_cast<T>(w) /
                   static_cast<T>(ow) - T(0.5);
        sy = std::clamp(sy, T(0), static_cast<T>(h - 1));
        sx = std::clamp(sx, T(0), static_cast<T>(w - 1));
        const i64 y0 = static_cast<i64>(sy), x0 = static_cast<i64>(sx);
        const i64 y1 = std::min<i64>(y0 + 1, h - 1);
        const i64 x1 = std::min<i64>(x0 + 1, w - 1);
        const T wy = sy - static_cast<T>(y0), wx = sx - static_cast<T>(x0);
        const T* p = src + ch * h * w;
        const T top = p[y0 * w + x0] * (T(1) - wx) + p[y0 * w + x1] * wx;
        const T bot = p[y1 * w + x0] * (T(1) - wx) + p[y1 * w + x1] * wx;
        dst[(ch * oh + oy) * ow + ox] = top * (T(1) - wy) + bot * wy;
      }
}

}  // namespace cxr::kern::ref
