// Copyright 2026 The bodyscene Authors.
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

// Compiled with -mavx2 -mfma. Nothing in here may run before active() has
// confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bodyscene/tensor/kernels.h"

namespace bodyscene::kernels {
namespace avx2 {
namespace {

constexpr int kBlockK = 256;

inline float HorizontalSum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// 4 rows x 16 columns over k in [k0, k1).
inline void Tile4x16(int k0, int k1, const float* a, std::ptrdiff_t a_rs,
                     std::ptrdiff_t a_cs, const float* b, std::ptrdiff_t ldb,
                     float* c, std::ptrdiff_t ldc, bool load_c) {
  __m256 c00, c01, c10, c11, c20, c21, c30, c31;
  if (load_c) {
    c00 = _mm256_loadu_ps(c);
    c01 = _mm256_loadu_ps(c + 8);
    c10 = _mm256_loadu_ps(c + ldc);
    c11 = _mm256_loadu_ps(c + ldc + 8);
    c20 = _mm256_loadu_ps(c + 2 * ldc);
    c21 = _mm256_loadu_ps(c + 2 * ldc + 8);
    c30 = _mm256_loadu_ps(c + 3 * ldc);
    c31 = _mm256_loadu_ps(c + 3 * ldc + 8);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_ps();
  }
  for (int p = k0; p < k1; ++p) {
    const float* brow = b + p * ldb;
    const __m256 b0 = _mm256_loadu_ps(brow);
    const __m256 b1 = _mm256_loadu_ps(brow + 8);
    const float* acol = a + p * a_cs;
    __m256 av = _mm256_broadcast_ss(acol);
    c00 = _mm256_fmadd_ps(av, b0, c00);
    c01 = _mm256_fmadd_ps(av, b1, c01);
    av = _mm256_broadcast_ss(acol + a_rs);
    c10 = _mm256_fmadd_ps(av, b0, c10);
    c11 = _mm256_fmadd_ps(av, b1, c11);
    av = _mm256_broadcast_ss(acol + 2 * a_rs);
    c20 = _mm256_fmadd_ps(av, b0, c20);
    c21 = _mm256_fmadd_ps(av, b1, c21);
    av = _mm256_broadcast_ss(acol + 3 * a_rs);
    c30 = _mm256_fmadd_ps(av, b0, c30);
    c31 = _mm256_fmadd_ps(av, b1, c31);
  }
  _mm256_storeu_ps(c, c00);
  _mm256_storeu_ps(c + 8, c01);
  _mm256_storeu_ps(c + ldc, c10);
  _mm256_storeu_ps(c + ldc + 8, c11);
  _mm256_storeu_ps(c + 2 * ldc, c20);
  _mm256_storeu_ps(c + 2 * ldc + 8, c21);
  _mm256_storeu_ps(c + 3 * ldc, c30);
  _mm256_storeu_ps(c + 3 * ldc + 8, c31);
}

// 1 row x 8 columns.
inline void Tile1x8(int k0, int k1, const float* a, std::ptrdiff_t a_cs,
                    const float* b, std::ptrdiff_t ldb, float* c,
                    bool load_c) {
  __m256 acc = load_c ? _mm256_loadu_ps(c) : _mm256_setzero_ps();
  for (int p = k0; p < k1; ++p) {
    acc = _mm256_fmadd_ps(_mm256_broadcast_ss(a + p * a_cs),
                          _mm256_loadu_ps(b + p * ldb), acc);
  }
  _mm256_storeu_ps(c, acc);
}

inline void Tile1x1(int k0, int k1, const float* a, std::ptrdiff_t a_cs,
                    const float* b, std::ptrdiff_t ldb, float* c,
                    bool load_c) {
  float acc = load_c ? *c : 0.0f;
  for (int p = k0; p < k1; ++p) acc = std::fma(a[p * a_cs], b[p * ldb], acc);
  *c = acc;
}

void Gemm(int m, int n, int k, const float* a, std::ptrdiff_t a_rs,
          std::ptrdiff_t a_cs, const float* b, std::ptrdiff_t ldb, float* c,
          std::ptrdiff_t ldc, bool accumulate) {
  if (k == 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::memset(c + i * ldc, 0, sizeof(float) * n);
    }
    return;
  }
  const int m4 = m - m % 4;
  const int n16 = n - n % 16;
  const int n8 = n - n % 8;
  for (int k0 = 0; k0 < k; k0 += kBlockK) {
    const int k1 = std::min(k, k0 + kBlockK);
    const bool load_c = accumulate || k0 > 0;
    // Column panels outermost: a k-block x 16 panel of B stays in L1 while
    // every row of A passes over it.
    for (int j = 0; j < n16; j += 16) {
      for (int i = 0; i < m4; i += 4) {
        Tile4x16(k0, k1, a + i * a_rs, a_rs, a_cs, b + j, ldb, c + i * ldc + j, ldc, load_c);
      }
      for (int i = m4; i < m; ++i) {
        Tile1x8(k0, k1, a + i * a_rs, a_cs, b + j, ldb, c + i * ldc + j, load_c);
        Tile1x8(k0, k1, a + i * a_rs, a_cs, b + j + 8, ldb, c + i * ldc + j + 8, load_c);
      }
    }
    for (int i = 0; i < m; ++i) {
      const float* ai = a + i * a_rs;
      float* ci = c + i * ldc;
      for (int j = n16; j < n8; j += 8) Tile1x8(k0, k1, ai, a_cs, b + j, ldb, ci + j, load_c);
      for (int j = n8; j < n; ++j) Tile1x1(k0, k1, ai, a_cs, b + j, ldb, ci + j, load_c);
    }
  }
}

void Axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    // mul then add, no FMA: keeps results bit-identical to the scalar path.
    const __m256 prod = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) {
    const float prod = alpha * x[i];
    y[i] += prod;
  }
}

void Add(std::size_t n, const float* a, const float* b, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                            _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void Relu(std::size_t n, const float* x, float* out) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    // Select, not max, so -0 and NaN pass through exactly as in the scalar loop.
    const __m256 drop = _mm256_cmp_ps(v, zero, _CMP_LT_OQ);
    _mm256_storeu_ps(out + i, _mm256_andnot_ps(drop, v));
  }
  for (; i < n; ++i) out[i] = x[i] < 0.0f ? 0.0f : x[i];
}

void ReluBackward(std::size_t n, const float* x, const float* gy, float* gx) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 keep = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m256 g = _mm256_and_ps(keep, _mm256_loadu_ps(gy + i));
    const __m256 old = _mm256_loadu_ps(gx + i);
    // Masked lanes must stay untouched (old + 0 would turn -0 into +0).
    _mm256_storeu_ps(gx + i, _mm256_blendv_ps(old, _mm256_add_ps(old, g), keep));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) gx[i] += gy[i];
  }
}

float Dot(std::size_t n, const float* a, const float* b) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8),
                           _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float s = HorizontalSum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void SgdMomentum(std::size_t n, float lr, float momentum, const float* g,
                 float* v, float* p) {
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 vm = _mm256_set1_ps(momentum);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 nv =
        _mm256_add_ps(_mm256_mul_ps(vm, _mm256_loadu_ps(v + i)),
                      _mm256_loadu_ps(g + i));
    _mm256_storeu_ps(v + i, nv);
    _mm256_storeu_ps(p + i,
                     _mm256_sub_ps(_mm256_loadu_ps(p + i), _mm256_mul_ps(vlr, nv)));
  }
  for (; i < n; ++i) {
    const float mv = momentum * v[i];
    v[i] = mv + g[i];
    const float step = lr * v[i];
    p[i] = p[i] - step;
  }
}

}  // namespace
}  // namespace avx2

const KernelTable* avx2_kernels() {
  static const KernelTable table{
      "avx2",          avx2::Gemm, avx2::Axpy,       avx2::Add,
      avx2::Relu,      avx2::ReluBackward, avx2::Dot,
      avx2::SgdMomentum};
  return &table;
}

}  // namespace bodyscene::kernels
