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

#include "cxr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "cxr/common.hpp"
#include "cxr/rng.hpp"

#ifdef CXR_WITH_OPENBLAS
#include <cblas.h>
#endif

namespace cxr::kern {

namespace {

// Caps the per-chunk im2col buffer; large eval batches are processed in
// sub-batches so activation scratch stays bounded.
i64 g_col_cap_elems = (48ll << 20) / 4;

i64 conv_chunk(i64 b, i64 k, i64 s) {
  const i64 per_image = k * s;
  if (per_image <= 0) return b;
  return std::clamp<i64>(g_col_cap_elems / per_image, 1, b);
}

}  // namespace

namespace detail {
void set_col_cap_elems(i64 elems) { g_col_cap_elems = std::max<i64>(elems, 1); }
i64 col_cap_elems() { return g_col_cap_elems; }
}  // namespace detail

// ---- GEMM ------------------------------------------------------------------

void gemm_builtin(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, float alpha,
                  const float* a, i64 lda, const float* b, i64 ldb, float beta,
                  float* c, i64 ldc) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < m; ++i) {
    float* crow = c + i * ldc;
    if (beta == 0.0f) {
      std::memset(crow, 0, sizeof(float) * static_cast<std::size_t>(n));
    } else if (beta != 1.0f) {
      for (i64 j = 0; j < n; ++j) crow[j] *= beta;
    }
    if (!trans_a && !trans_b) {
      // ikj: unit-stride accumulation along rows of B.
      constexpr i64 kKB = 256;
      for (i64 k0 = 0; k0 < k; k0 += kKB) {
        const i64 k1 = std::min(k0 + kKB, k);
        for (i64 p = k0; p < k1; ++p) {
          const float av = alpha * a[i * lda + p];
          const float* brow = b + p * ldb;
          for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    } else if (!trans_a && trans_b) {
      // Dot products over contiguous rows of A and B.
      const float* arow = a + i * lda;
      for (i64 j = 0; j < n; ++j) {
        const float* brow = b + j * ldb;
        float acc = 0.0f;
        for (i64 p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += alpha * acc;
      }
    } else if (trans_a && !trans_b) {
      for (i64 p = 0; p < k; ++p) {
        const float av = alpha * a[p * lda + i];
        const float* brow = b + p * ldb;
        for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    } else {
      for (i64 j = 0; j < n; ++j) {
        float acc = 0.0f;
        for (i64 p = 0; p < k; ++p) acc += a[p * lda + i] * b[j * ldb + p];
        crow[j] += alpha * acc;
      }
    }
  }
}

void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, float alpha,
          const float* a, i64 lda, const float* b, i64 ldb, float beta,
          float* c, i64 ldc) {
  if (m <= 0 || n <= 0) return;
#ifdef CXR_WITH_OPENBLAS
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
#else
  gemm_builtin(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
#endif
}

// ---- im2col / col2im ---------------------------------------------------------

void im2col(const float* im, i64 h, i64 w, const ConvGeom& g, float* col,
            i64 ld_col, i64 col_off) {
  const i64 oh = g.out_h(h), ow = g.out_w(w);
  const i64 rows = g.in_c * g.kh * g.kw;
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const i64 c = r / (g.kh * g.kw);
    const i64 ki = (r / g.kw) % g.kh;
    const i64 kj = r % g.kw;
    const float* plane = im + c * h * w;
    float* out = col + r * ld_col + col_off;
    for (i64 oy = 0; oy < oh; ++oy) {
      const i64 iy = oy * g.sh - g.ph + ki;
      float* dst = out + oy * ow;
      if (iy < 0 || iy >= h) {
        std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(ow));
        continue;
      }
      const float* src = plane + iy * w;
      for (i64 ox = 0; ox < ow; ++ox) {
        const i64 ix = ox * g.sw - g.pw + kj;
        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
      }
    }
  }
}

void col2im(const float* col, i64 h, i64 w, const ConvGeom& g, float* im,
            i64 ld_col, i64 col_off) {
  const i64 oh = g.out_h(h), ow = g.out_w(w);
  const i64 kk = g.kh * g.kw;
  // Parallel over channels: each thread scatters into disjoint planes.
#pragma omp parallel for schedule(static)
  for (i64 c = 0; c < g.in_c; ++c) {
    float* plane = im + c * h * w;
    for (i64 ki = 0; ki < g.kh; ++ki) {
      for (i64 kj = 0; kj < g.kw; ++kj) {
        const i64 r = c * kk + ki * g.kw + kj;
        const float* src = col + r * ld_col + col_off;
        for (i64 oy = 0; oy < oh; ++oy) {
          const i64 iy = oy * g.sh - g.ph + ki;
          if (iy < 0 || iy >= h) continue;
          float* dst = plane + iy * w;
          const float* s = src + oy * ow;
          for (i64 ox = 0; ox < ow; ++ox) {
            const i64 ix = ox * g.sw - g.pw + kj;
            if (ix >= 0 && ix < w) dst[ix] += s[ox];
          }
        }
      }
    }
  }
}

// ---- Convolution --------------------------------------------------------------

void conv2d_forward(const float* x, i64 b, i64 h, i64 w_in, const float* w,
                    const float* bias, float* y, const ConvGeom& g,
                    ConvScratch& scr) {
  const i64 oh = g.out_h(h), ow = g.out_w(w_in), s = oh * ow;
  const i64 k = g.in_c * g.kh * g.kw;
  const i64 in_plane = g.in_c * h * w_in;
  const i64 chunk = conv_chunk(b, k, s);
  scr.col.resize(static_cast<std::size_t>(k * chunk * s));
  scr.tmp.resize(static_cast<std::size_t>(g.out_c * chunk * s));
  for (i64 b0 = 0; b0 < b; b0 += chunk) {
    const i64 bc = std::min(chunk, b - b0);
    const i64 ld = bc * s;
    for (i64 i = 0; i < bc; ++i)
      im2col(x + (b0 + i) * in_plane, h, w_in, g, scr.col.data(), ld, i * s);
    gemm(false, false, g.out_c, ld, k, 1.0f, w, k, scr.col.data(), ld, 0.0f,
         scr.tmp.data(), ld);
    // (out_c, bc*s) -> (bc, out_c, s)
#pragma omp parallel for schedule(static) collapse(2)
    for (i64 i = 0; i < bc; ++i)
      for (i64 oc = 0; oc < g.out_c; ++oc)
        std::memcpy(y + ((b0 + i) * g.out_c + oc) * s,
                    scr.tmp.data() + oc * ld + i * s,
                    sizeof(float) * static_cast<std::size_t>(s));
  }
  if (bias) bias_add_channels(y, bias, b, g.out_c, s);
}

void conv2d_backward_input(const float* dy, i64 b, i64 h, i64 w_in,
                           const float* w, float* dx, const ConvGeom& g,
                           ConvScratch& scr) {
  const i64 oh = g.out_h(h), ow = g.out_w(w_in), s = oh * ow;
  const i64 k = g.in_c * g.kh * g.kw;
  const i64 in_plane = g.in_c * h * w_in;
  const i64 chunk = conv_chunk(b, k, s);
  scr.col.resize(static_cast<std::size_t>(k * chunk * s));
  scr.tmp.resize(static_cast<std::size_t>(g.out_c * chunk * s));
  std::memset(dx, 0, sizeof(float) * static_cast<std::size_t>(b * in_plane));
  for (i64 b0 = 0; b0 < b; b0 += chunk) {
    const i64 bc = std::min(chunk, b - b0);
    const i64 ld = bc * s;
#pragma omp parallel for schedule(static) collapse(2)
    for (i64 i = 0; i < bc; ++i)
      for (i64 oc = 0; oc < g.out_c; ++oc)
        std::memcpy(scr.tmp.data() + oc * ld + i * s,
                    dy + ((b0 + i) * g.out_c + oc) * s,
                    sizeof(float) * static_cast<std::size_t>(s));
    // col = W^T * dy
    gemm(true, false, k, ld, g.out_c, 1.0f, w, k, scr.tmp.data(), ld, 0.0f,
         scr.col.data(), ld);
    for (i64 i = 0; i < bc; ++i)
      col2im(scr.col.data(), h, w_in, g, dx + (b0 + i) * in_plane, ld, i * s);
  }
}

void conv2d_backward_weights(const float* x, const float* dy, i64 b, i64 h,
                             i64 w_in, float* dw, float* db, const ConvGeom& g,
                             ConvScratch& scr) {
  const i64 oh = g.out_h(h), ow = g.out_w(w_in), s = oh * ow;
  const i64 k = g.in_c * g.kh * g.kw;
  const i64 in_plane = g.in_c * h * w_in;
  const i64 chunk = conv_chunk(b, k, s);
  scr.col.resize(static_cast<std::size_t>(k * chunk * s));
  scr.tmp.resize(static_cast<std::size_t>(g.out_c * chunk * s));
  for (i64 b0 = 0; b0 < b; b0 += chunk) {
    const i64 bc = std::min(chunk, b - b0);
    const i64 ld = bc * s;
    for (i64 i = 0; i < bc; ++i)
      im2col(x + (b0 + i) * in_plane, h, w_in, g, scr.col.data(), ld, i * s);
#pragma omp parallel for schedule(static) collapse(2)
    for (i64 i = 0; i < bc; ++i)
      for (i64 oc = 0; oc < g.out_c; ++oc)
        std::memcpy(scr.tmp.data() + oc * ld + i * s,
                    dy + ((b0 + i) * g.out_c + oc) * s,
                    sizeof(float) * static_cast<std::size_t>(s));
    gemm(false, true, g.out_c, k, ld, 1.0f, scr.tmp.data(), ld, scr.col.data(),
         ld, 1.0f, dw, k);
  }
  if (db) {
#pragma omp parallel for schedule(static)
    for (i64 oc = 0; oc < g.out_c; ++oc) {
      double acc = 0.0;
      for (i64 i = 0; i < b; ++i) {
        const float* row = dy + (i * g.out_c + oc) * s;
        for (i64 j = 0; j < s; ++j) acc += row[j];
      }
      db[oc] += static_cast<float>(acc);
    }
  }
}

// ---- Pooling ------------------------------------------------------------------

void maxpool_forward(const float* x, i64 b, i64 c, i64 h, i64 w, i64 kh, i64 kw,
                     i64 sh, i64 sw, i64 ph, i64 pw, float* y, i64* idx) {
  const i64 oh = (h + 2 * ph - kh) / sh + 1;
  const i64 ow = (w + 2 * pw - kw) / sw + 1;
  const i64 planes = b * c;
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < planes; ++p) {
    const float* in = x + p * h * w;
    float* out = y + p * oh * ow;
    i64* oidx = idx + p * oh * ow;
    for (i64 oy = 0; oy < oh; ++oy) {
      for (i64 ox = 0; ox < ow; ++ox) {
        const i64 y0 = std::max<i64>(oy * sh - ph, 0);
        const i64 x0 = std::max<i64>(ox * sw - pw, 0);
        const i64 y1 = std::min<i64>(oy * sh - ph + kh, h);
        const i64 x1 = std::min<i64>(ox * sw - pw + kw, w);
        float best = -std::numeric_limits<float>::infinity();
        i64 best_i = y0 * w + x0;
        for (i64 iy = y0; iy < y1; ++iy)
          for (i64 ix = x0; ix < x1; ++ix) {
            const float v = in[iy * w + ix];
            if (v > best) {
              best = v;
              best_i = iy * w + ix;
            }
          }
        out[oy * ow + ox] = best;
        oidx[oy * ow + ox] = best_i;
      }
    }
  }
}

void maxpool_backward(const float* dy, const i64* idx, i64 b, i64 c, i64 oh,
                      i64 ow, i64 h, i64 w, float* dx) {
  const i64 planes = b * c;
  std::memset(dx, 0, sizeof(float) * static_cast<std::size_t>(planes * h * w));
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < planes; ++p) {
    const float* g = dy + p * oh * ow;
    const i64* oidx = idx + p * oh * ow;
    float* out = dx + p * h * w;
    for (i64 i = 0; i < oh * ow; ++i) out[oidx[i]] += g[i];
  }
}

void avgpool_forward(const float* x, i64 b, i64 c, i64 h, i64 w, i64 kh, i64 kw,
                     i64 sh, i64 sw, i64 ph, i64 pw, float* y) {
  const i64 oh = (h + 2 * ph - kh) / sh + 1;
  const i64 ow = (w + 2 * pw - kw) / sw + 1;
  const i64 planes = b * c;
  const float inv = 1.0f / static_cast<float>(kh * kw);
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < planes; ++p) {
    const float* in = x + p * h * w;
    float* out = y + p * oh * ow;
    for (i64 oy = 0; oy < oh; ++oy) {
      for (i64 ox = 0; ox < ow; ++ox) {
        const i64 y0 = std::max<i64>(oy * sh - ph, 0);
        const i64 x0 = std::max<i64>(ox * sw - pw, 0);
        const i64 y1 = std::min<i64>(oy * sh - ph + kh, h);
        const i64 x1 = std::min<i64>(ox * sw - pw + kw, w);
        float acc = 0.0f;
        for (i64 iy = y0; iy < y1; ++iy)
          for (i64 ix = x0; ix < x1; ++ix) acc += in[iy * w + ix];
        out[oy * ow + ox] = acc * inv;
      }
    }
  }
}

void avgpool_backward(const float* dy, i64 b, i64 c, i64 oh, i64 ow, i64 h,
                      i64 w, i64 kh, i64 kw, i64 sh, i64 sw, i64 ph, i64 pw,
                      float* dx) {
  const i64 planes = b * c;
  const float inv = 1.0f / static_cast<float>(kh * kw);
  std::memset(dx, 0, sizeof(float) * static_cast<std::size_t>(planes * h * w));
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < planes; ++p) {
    const float* g = dy + p * oh * ow;
    float* out = dx + p * h * w;
    for (i64 oy = 0; oy < oh; ++oy) {
      for (i64 ox = 0; ox < ow; ++ox) {
        const i64 y0 = std::max<i64>(oy * sh - ph, 0);
        const i64 x0 = std::max<i64>(ox * sw - pw, 0);
        const i64 y1 = std::min<i64>(oy * sh - ph + kh, h);
        const i64 x1 = std::min<i64>(ox * sw - pw + kw, w);
        const float v = g[oy * ow + ox] * inv;
        for (i64 iy = y0; iy < y1; ++iy)
          for (i64 ix = x0; ix < x1; ++ix) out[iy * w + ix] += v;
      }
    }
  }
}

namespace {
inline i64 ad_start(i64 o, i64 in, i64 out) { return (o * in) / out; }
inline i64 ad_end(i64 o, i64 in, i64 out) { return ((o + 1) * in + out - 1) / out; }
}  // namespace

void adaptive_avgpool_forward(const float* x, i64 b, i64 c, i64 h, i64 w,
                              i64 oh, i64 ow, float* y) {
  const i64 planes = b * c;
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < planes; ++p) {
    const float* in = x + p * h * w;
    float* out = y + p * oh * ow;
    for (i64 oy = 0; oy < oh; ++oy) {
      const i64 y0 = ad_start(oy, h, oh), y1 = ad_end(oy, h, oh);
      for (i64 ox = 0; ox < ow; ++ox) {
        const i64 x0 = ad_start(ox, w, ow), x1 = ad_end(ox, w, ow);
        double acc = 0.0;
        for (i64 iy = y0; iy < y1; ++iy)
          for (i64 ix = x0; ix < x1; ++ix) acc += in[iy * w + ix];
        out[oy * ow + ox] =
            static_cast<float>(acc / static_cast<double>((y1 - y0) * (x1 - x0)));
      }
    }
  }
}

void adaptive_avgpool_backward(const float* dy, i64 b, i64 c, i64 h, i64 w,
                               i64 oh, i64 ow, float* dx) {
  const i64 planes = b * c;
  std::memset(dx, 0, sizeof(float) * static_cast<std::size_t>(planes * h * w));
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < planes; ++p) {
    const float* g = dy + p * oh * ow;
    float* out = dx + p * h * w;
    for (i64 oy = 0; oy < oh; ++oy) {
      const i64 y0 = ad_start(oy, h, oh), y1 = ad_end(oy, h, oh);
      for (i64 ox = 0; ox < ow; ++ox) {
        const i64 x0 = ad_start(ox, w, ow), x1 = ad_end(ox, w, ow);
        const float v = g[oy * ow + ox] /
                        static_cast<float>((y1 - y0) * (x1 - x0));
        for (i64 iy = y0; iy < y1; ++iy)
          for (i64 ix = x0; ix < x1; ++ix) out[iy * w + ix] += v;
      }
    }
  }
}

// ---- BatchNorm -----------------------------------------------------------------

void bn_forward_train(const float* x, i64 b, i64 c, i64 h, i64 w,
                      const float* gamma, const float* beta, float* running_mean,
                      float* running_var, float momentum, float eps, float* y,
                      float* save_mean, float* save_invstd) {
  const i64 spatial = h * w;
  const i64 m = b * spatial;
#pragma omp parallel for schedule(static)
  for (i64 ch = 0; ch < c; ++ch) {
    double s1 = 0.0;
    for (i64 i = 0; i < b; ++i) {
      const float* p = x + (i * c + ch) * spatial;
      for (i64 j = 0; j < spatial; ++j) s1 += p[j];
    }
    const double mean = s1 / static_cast<double>(m);
    double s2 = 0.0;
    for (i64 i = 0; i < b; ++i) {
      const float* p = x + (i * c + ch) * spatial;
      for (i64 j = 0; j < spatial; ++j) {
        const double d = p[j] - mean;
        s2 += d * d;
      }
    }
    const double var = s2 / static_cast<double>(m);
    const double invstd = 1.0 / std::sqrt(var + static_cast<double>(eps));
    save_mean[ch] = static_cast<float>(mean);
    save_invstd[ch] = static_cast<float>(invstd);
    const double unbiased = m > 1 ? s2 / static_cast<double>(m - 1) : var;
    running_mean[ch] = static_cast<float>((1.0 - momentum) * running_mean[ch] +
                                          momentum * mean);
    running_var[ch] = static_cast<float>((1.0 - momentum) * running_var[ch] +
                                         momentum * unbiased);
    const float a = gamma[ch] * static_cast<float>(invstd);
    const float d = beta[ch] - a * static_cast<float>(mean);
    for (i64 i = 0; i < b; ++i) {
      const float* p = x + (i * c + ch) * spatial;
      float* q = y + (i * c + ch) * spatial;
      for (i64 j = 0; j < spatial; ++j) q[j] = a * p[j] + d;
    }
  }
}

void bn_forward_eval(const float* x, i64 b, i64 c, i64 h, i64 w,
                     const float* gamma, const float* beta,
                     const float* running_mean, const float* running_var,
                     float eps, float* y) {
  const i64 spatial = h * w;
#pragma omp parallel for schedule(static)
  for (i64 ch = 0; ch < c; ++ch) {
    const float a = gamma[ch] / std::sqrt(running_var[ch] + eps);
    const float d = beta[ch] - a * running_mean[ch];
    for (i64 i = 0; i < b; ++i) {
      const float* p = x + (i * c + ch) * spatial;
      float* q = y + (i * c + ch) * spatial;
      for (i64 j = 0; j < spatial; ++j) q[j] = a * p[j] + d;
    }
  }
}

void bn_backward_train(const float* x, const float* dy, i64 b, i64 c, i64 h,
                       i64 w, const float* gamma, const float* save_mean,
                       const float* save_invstd, float* dx, float* dgamma,
                       float* dbeta) {
  const i64 spatial = h * w;
  const i64 m = b * spatial;
#pragma omp parallel for schedule(static)
  for (i64 ch = 0; ch < c; ++ch) {
    const double mean = save_mean[ch];
    const double invstd = save_invstd[ch];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (i64 i = 0; i < b; ++i) {
      const float* px = x + (i * c + ch) * spatial;
      const float* pg = dy + (i * c + ch) * spatial;
      for (i64 j = 0; j < spatial; ++j) {
        const double xhat = (px[j] - mean) * invstd;
        sum_dy += pg[j];
        sum_dy_xhat += pg[j] * xhat;
      }
    }
    dbeta[ch] += static_cast<float>(sum_dy);
    dgamma[ch] += static_cast<float>(sum_dy_xhat);
    const double k1 = sum_dy / static_cast<double>(m);
    const double k2 = sum_dy_xhat / static_cast<double>(m);
    const double scale = gamma[ch] * invstd;
    for (i64 i = 0; i < b; ++i) {
      const float* px = x + (i * c + ch) * spatial;
      const float* pg = dy + (i * c + ch) * spatial;
      float* pd = dx + (i * c + ch) * spatial;
      for (i64 j = 0; j < spatial; ++j) {
        const double xhat = (px[j] - mean) * invstd;
        pd[j] = static_cast<float>(scale * (pg[j] - k1 - xhat * k2));
      }
    }
  }
}

void bn_backward_eval(const float* dy, i64 b, i64 c, i64 h, i64 w,
                      const float* gamma, const float* running_var, float eps,
                      float* dx) {
  const i64 spatial = h * w;
#pragma omp parallel for schedule(static)
  for (i64 ch = 0; ch < c; ++ch) {
    const float a = gamma[ch] / std::sqrt(running_var[ch] + eps);
    for (i64 i = 0; i < b; ++i) {
      const float* pg = dy + (i * c + ch) * spatial;
      float* pd = dx + (i * c + ch) * spatial;
      for (i64 j = 0; j < spatial; ++j) pd[j] = a * pg[j];
    }
  }
}

// ---- Elementwise ------------------------------------------------------------------

void relu_forward(const float* x, float* y, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(const float* y, const float* dy, float* dx, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void sigmoid(const float* x, float* y, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) {
    const float z = x[i];
    y[i] = z >= 0.0f ? 1.0f / (1.0f + std::exp(-z))
                     : std::exp(z) / (1.0f + std::exp(z));
  }
}

void add(const float* a, const float* b, float* y, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void add_inplace(float* a, const float* b, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) a[i] += b[i];
}

void scale(float* x, float v, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) x[i] *= v;
}

void dropout_forward(const float* x, float* y, i64 n, float p, std::uint64_t key) {
  if (p <= 0.0f) {
    if (y != x) std::memcpy(y, x, sizeof(float) * static_cast<std::size_t>(n));
    return;
  }
  const float inv_keep = 1.0f / (1.0f - p);
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i)
    y[i] = counter_uniform(key, static_cast<std::uint64_t>(i)) >= p
               ? x[i] * inv_keep
               : 0.0f;
}

void dropout_backward(const float* dy, float* dx, i64 n, float p, std::uint64_t key) {
  dropout_forward(dy, dx, n, p, key);
}

void bias_add_rows(float* y, const float* bias, i64 rows, i64 cols) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < rows; ++i) {
    float* row = y + i * cols;
    for (i64 j = 0; j < cols; ++j) row[j] += bias[j];
  }
}

void bias_add_channels(float* y, const float* bias, i64 b, i64 c, i64 spatial) {
#pragma omp parallel for schedule(static) collapse(2)
  for (i64 i = 0; i < b; ++i)
    for (i64 ch = 0; ch < c; ++ch) {
      float* p = y + (i * c + ch) * spatial;
      const float v = bias[ch];
      for (i64 j = 0; j < spatial; ++j) p[j] += v;
    }
}

// ---- Linear ---------------------------------------------------------------------

void linear_forward(const float* x, i64 b, i64 in, i64 out, const float* w,
                    const float* bias, float* y) {
  gemm(false, true, b, out, in, 1.0f, x, in, w, in, 0.0f, y, out);
  if (bias) bias_add_rows(y, bias, b, out);
}

void linear_backward_input(const float* dy, i64 b, i64 in, i64 out,
                           const float* w, float* dx) {
  gemm(false, false, b, in, out, 1.0f, dy, out, w, in, 0.0f, dx, in);
}

void linear_backward_params(const float* x, const float* dy, i64 b, i64 in,
                            i64 out, float* dw, float* db) {
  gemm(true, false, out, in, b, 1.0f, dy, out, x, in, 1.0f, dw, in);
  if (db) {
#pragma omp parallel for schedule(static)
    for (i64 o = 0; o < out; ++o) {
      double acc = 0.0;
      for (i64 i = 0; i < b; ++i) acc += dy[i * out + o];
      db[o] += static_cast<float>(acc);
    }
  }
}

// ---- Resampling -------------------------------------------------------------------

void resize_bilinear(const float* src, i64 c, i64 h, i64 w, float* dst, i64 oh,
                     i64 ow) {
  if (oh == h && ow == w) {
    std::memcpy(dst, src, sizeof(float) * static_cast<std::size_t>(c * h * w));
    return;
  }
  const double ry = static_cast<double>(h) / static_cast<double>(oh);
  const double rx = static_cast<double>(w) / static_cast<double>(ow);
#pragma omp parallel for schedule(static)
  for (i64 ch = 0; ch < c; ++ch) {
    const float* plane = src + ch * h * w;
    float* out = dst + ch * oh * ow;
    for (i64 oy = 0; oy < oh; ++oy) {
      double sy = (static_cast<double>(oy) + 0.5) * ry - 0.5;
      sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const i64 y0 = static_cast<i64>(sy);
      const i64 y1 = std::min<i64>(y0 + 1, h - 1);
      const float wy = static_cast<float>(sy - static_cast<double>(y0));
      for (i64 ox = 0; ox < ow; ++ox) {
        double sx = (static_cast<double>(ox) + 0.5) * rx - 0.5;
        sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
        const i64 x0 = static_cast<i64>(sx);
        const i64 x1 = std::min<i64>(x0 + 1, w - 1);
        const float wx = static_cast<float>(sx - static_cast<double>(x0));
        const float top = plane[y0 * w + x0] * (1.0f - wx) + plane[y0 * w + x1] * wx;
        const float bot = plane[y1 * w + x0] * (1.0f - wx) + plane[y1 * w + x1] * wx;
        out[oy * ow + ox] = top * (1.0f - wy) + bot * wy;
      }
    }
  }
}

void flip_horizontal(const float* x, i64 c, i64 h, i64 w, float* y) {
#pragma omp parallel for schedule(static) collapse(2)
  for (i64 ch = 0; ch < c; ++ch)
    for (i64 iy = 0; iy < h; ++iy) {
      const float* src = x + (ch * h + iy) * w;
      float* dst = y + (ch * h + iy) * w;
      for (i64 ix = 0; ix < w; ++ix) dst[ix] = src[w - 1 - ix];
    }
}

void crop(const float* x, i64 c, i64 h, i64 w, i64 top, i64 left, i64 ch_out,
          i64 cw, float* y) {
#pragma omp parallel for schedule(static) collapse(2)
  for (i64 ch = 0; ch < c; ++ch)
    for (i64 iy = 0; iy < ch_out; ++iy)
      std::memcpy(y + (ch * ch_out + iy) * cw,
                  x + (ch * h + top + iy) * w + left,
                  sizeof(float) * static_cast<std::size_t>(cw));
}

// ---- Optimizer / reductions ----------------------------------------------------------

void adam_step(float* p, const float* g, float* m, float* v, i64 n, i64 t,
               float lr, float beta1, float beta2, float eps) {
  const double bc1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(t));
  const float inv_bc1 = static_cast<float>(1.0 / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    const float mhat = m[i] * inv_bc1;
    const float vhat = v[i] * inv_bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

double sum(const float* x, i64 n) {
  double acc = 0.0;
  for (i64 i = 0; i < n; ++i) acc += x[i];
  return acc;
}

bool all_finite(const float* x, i64 n) {
  int bad = 0;
#pragma omp parallel for schedule(static) reduction(| : bad)
  for (i64 i = 0; i < n; ++i) bad |= std::isfinite(x[i]) ? 0 : 1;
  return bad == 0;
}

}  // namespace cxr::kern
