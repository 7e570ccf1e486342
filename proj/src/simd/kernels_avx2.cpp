// Copyright 2026 The MDC Authors. All Rights Reserved.
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

// Compiled with -mavx2 -mfma; only reached through the runtime dispatcher.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mdc/simd/kernels.hpp"

namespace mdc::simd::avx2 {
namespace {

constexpr int kMr = 4;
constexpr int kNr = 12;

inline double load_op(const double* p, int ld, Trans t, int r, int c) {
  return t == Trans::kNo ? p[r * ld + c] : p[c * ld + r];
}

// Packs op(A) into row tiles of kMr: tile t holds, for each p, rows
// [t*kMr, t*kMr+kMr) contiguously. Rows past m are zero.
void pack_a(Trans ta, int m, int k0, int kb, const double* a, int lda, double* out) {
  const int tiles = (m + kMr - 1) / kMr;
  for (int t = 0; t < tiles; ++t) {
    double* dst = out + static_cast<size_t>(t) * kb * kMr;
    for (int p = 0; p < kb; ++p) {
      for (int r = 0; r < kMr; ++r) {
        const int i = t * kMr + r;
        dst[p * kMr + r] = i < m ? load_op(a, lda, ta, i, k0 + p) : 0.0;
      }
    }
  }
}

// Packs a kNr-wide column panel of op(B); columns past n are zero.
void pack_b(Trans tb, int n, int k0, int kb, int j0, const double* b, int ldb, double* out) {
  const int cols = std::min(kNr, n - j0);
  if (tb == Trans::kYes) {
    for (int c = 0; c < kNr; ++c) {
      if (c < cols) {
        const double* src = b + static_cast<size_t>(j0 + c) * ldb + k0;
        for (int p = 0; p < kb; ++p) out[p * kNr + c] = src[p];
      } else {
        for (int p = 0; p < kb; ++p) out[p * kNr + c] = 0.0;
      }
    }
    return;
  }
  for (int p = 0; p < kb; ++p) {
    const double* src = b + static_cast<size_t>(k0 + p) * ldb + j0;
    for (int c = 0; c < kNr; ++c) out[p * kNr + c] = c < cols ? src[c] : 0.0;
  }
}

// 4x12 register tile; B rows are read with stride ldb. Sums start from
// zero, or from `out` when `resume` is set (running sums carried across
// k-blocks, so blocking never reorders the reduction). With `add` the
// finished sums are added to `out` instead of replacing it.
inline void micro_kernel(int k, const double* ap, const double* bp, int ldb, double* out,
                         int ldo, bool resume, bool add) {
  double* o0 = out;
  double* o1 = out + ldo;
  double* o2 = out + 2 * ldo;
  double* o3 = out + 3 * ldo;
  __m256d c00, c01, c02, c10, c11, c12, c20, c21, c22, c30, c31, c32;
  if (!resume) {
    c00 = c01 = c02 = c10 = c11 = c12 = _mm256_setzero_pd();
    c20 = c21 = c22 = c30 = c31 = c32 = _mm256_setzero_pd();
  } else {
    c00 = _mm256_loadu_pd(o0);
    c01 = _mm256_loadu_pd(o0 + 4);
    c02 = _mm256_loadu_pd(o0 + 8);
    c10 = _mm256_loadu_pd(o1);
    c11 = _mm256_loadu_pd(o1 + 4);
    c12 = _mm256_loadu_pd(o1 + 8);
    c20 = _mm256_loadu_pd(o2);
    c21 = _mm256_loadu_pd(o2 + 4);
    c22 = _mm256_loadu_pd(o2 + 8);
    c30 = _mm256_loadu_pd(o3);
    c31 = _mm256_loadu_pd(o3 + 4);
    c32 = _mm256_loadu_pd(o3 + 8);
  }
  for (int p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    const __m256d b2 = _mm256_loadu_pd(bp + 8);
    __m256d a = _mm256_broadcast_sd(ap);
    c00 = _mm256_fmadd_pd(a, b0, c00);
    c01 = _mm256_fmadd_pd(a, b1, c01);
    c02 = _mm256_fmadd_pd(a, b2, c02);
    a = _mm256_broadcast_sd(ap + 1);
    c10 = _mm256_fmadd_pd(a, b0, c10);
    c11 = _mm256_fmadd_pd(a, b1, c11);
    c12 = _mm256_fmadd_pd(a, b2, c12);
    a = _mm256_broadcast_sd(ap + 2);
    c20 = _mm256_fmadd_pd(a, b0, c20);
    c21 = _mm256_fmadd_pd(a, b1, c21);
    c22 = _mm256_fmadd_pd(a, b2, c22);
    a = _mm256_broadcast_sd(ap + 3);
    c30 = _mm256_fmadd_pd(a, b0, c30);
    c31 = _mm256_fmadd_pd(a, b1, c31);
    c32 = _mm256_fmadd_pd(a, b2, c32);
    ap += kMr;
    bp += ldb;
  }
  auto put = [add](double* p, __m256d v) {
    _mm256_storeu_pd(p, add ? _mm256_add_pd(_mm256_loadu_pd(p), v) : v);
  };
  put(o0, c00);
  put(o0 + 4, c01);
  put(o0 + 8, c02);
  put(o1, c10);
  put(o1 + 4, c11);
  put(o1 + 8, c12);
  put(o2, c20);
  put(o2 + 4, c21);
  put(o2 + 8, c22);
  put(o3, c30);
  put(o3 + 4, c31);
  put(o3 + 8, c32);
}

// Copies (or adds) the valid part of a kMr x kNr tile into C.
void flush_tile(const double* tile, int rows, int cols, double* c, int ldc, bool add) {
  for (int r = 0; r < rows; ++r) {
    double* crow = c + static_cast<size_t>(r) * ldc;
    const double* trow = tile + r * kNr;
    if (add) {
      for (int cc = 0; cc < cols; ++cc) crow[cc] += trow[cc];
    } else {
      for (int cc = 0; cc < cols; ++cc) crow[cc] = trow[cc];
    }
  }
}

}  // namespace

void gemm(Trans ta, Trans tb, int m, int n, int k, const double* a, int lda, const double* b,
          int ldb, double* c, int ldc, bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    }
    return;
  }
  constexpr int kKc = 256;
  thread_local std::vector<double> apack;
  thread_local std::vector<double> bpack;
  thread_local std::vector<double> acc;
  const int tiles = (m + kMr - 1) / kMr;
  const int panels = (n + kNr - 1) / kNr;
  apack.resize(static_cast<size_t>(tiles) * kKc * kMr);
  bpack.resize(static_cast<size_t>(kKc) * kNr);

  auto panel_of = [&](int k0, int kb, int j0, const double*& panel, int& panel_ld) {
    if (tb == Trans::kNo && n - j0 >= kNr) {
      panel = b + static_cast<size_t>(k0) * ldb + j0;
      panel_ld = ldb;
    } else {
      pack_b(tb, n, k0, kb, j0, b, ldb, bpack.data());
      panel = bpack.data();
      panel_ld = kNr;
    }
  };

  if (k <= kKc) {
    // One k-block: full tiles finish in registers and go straight to C.
    pack_a(ta, m, 0, k, a, lda, apack.data());
    alignas(32) double edge[kMr * kNr];
    for (int jp = 0; jp < panels; ++jp) {
      const int j0 = jp * kNr;
      const int cols = std::min(kNr, n - j0);
      const double* panel;
      int panel_ld;
      panel_of(0, k, j0, panel, panel_ld);
      for (int t = 0; t < tiles; ++t) {
        const int rows = std::min(kMr, m - t * kMr);
        const double* ap = apack.data() + static_cast<size_t>(t) * k * kMr;
        double* cp = c + static_cast<size_t>(t) * kMr * ldc + j0;
        if (rows == kMr && cols == kNr) {
          micro_kernel(k, ap, panel, panel_ld, cp, ldc, false, accumulate);
        } else {
          micro_kernel(k, ap, panel, panel_ld, edge, kNr, false, false);
          flush_tile(edge, rows, cols, cp, ldc, accumulate);
        }
      }
    }
    return;
  }

  acc.resize(static_cast<size_t>(tiles) * panels * kMr * kNr);
  for (int k0 = 0; k0 < k; k0 += kKc) {
    const int kb = std::min(kKc, k - k0);
    pack_a(ta, m, k0, kb, a, lda, apack.data());
    for (int jp = 0; jp < panels; ++jp) {
      const double* panel;
      int panel_ld;
      panel_of(k0, kb, jp * kNr, panel, panel_ld);
      for (int t = 0; t < tiles; ++t) {
        micro_kernel(kb, apack.data() + static_cast<size_t>(t) * kb * kMr, panel, panel_ld,
                     acc.data() + (static_cast<size_t>(t) * panels + jp) * kMr * kNr, kNr,
                     k0 > 0, false);
      }
    }
  }
  for (int t = 0; t < tiles; ++t) {
    const int rows = std::min(kMr, m - t * kMr);
    for (int jp = 0; jp < panels; ++jp) {
      const int j0 = jp * kNr;
      flush_tile(acc.data() + (static_cast<size_t>(t) * panels + jp) * kMr * kNr, rows,
                 std::min(kNr, n - j0), c + static_cast<size_t>(t) * kMr * ldc + j0, ldc,
                 accumulate);
    }
  }
}

void axpy(size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

double dot(size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) acc = std::fma(x[i], y[i], acc);
  return acc;
}

// Mirrors the scalar reference operation for operation (no fused
// multiply-add), so both paths produce bit-identical parameters.
void adam_update(size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& c) {
  const double step = c.lr / c.bias1;
  const double inv_bias2 = 1.0 / c.bias2;
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b1c = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d b2c = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d vstep = _mm256_set1_pd(step);
  const __m256d vinv = _mm256_set1_pd(inv_bias2);
  const __m256d veps = _mm256_set1_pd(c.eps);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(b1c, g));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(b2c, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, vinv)), veps);
    const __m256d upd = _mm256_div_pd(_mm256_mul_pd(vstep, mi), denom);
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), upd));
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * (g * g);
    param[i] -= step * m[i] / (std::sqrt(v[i] * inv_bias2) + c.eps);
  }
}

}  // namespace mdc::simd::avx2
