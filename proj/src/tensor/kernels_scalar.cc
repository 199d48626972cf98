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

#include <cstdlib>
#include <cstring>

#include "bodyscene/tensor/kernels.h"

namespace bodyscene::kernels {
namespace scalar {

void Gemm(int m, int n, int k, const float* a, std::ptrdiff_t a_rs,
          std::ptrdiff_t a_cs, const float* b, std::ptrdiff_t ldb, float* c,
          std::ptrdiff_t ldc, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + i * ldc;
    if (!accumulate) std::memset(crow, 0, sizeof(float) * n);
    for (int p = 0; p < k; ++p) {
      const float aip = a[i * a_rs + p * a_cs];
      if (aip == 0.0f) continue;
      const float* brow = b + p * ldb;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void Axpy(std::size_t n, float alpha, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void Add(std::size_t n, const float* a, const float* b, float* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void Relu(std::size_t n, const float* x, float* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] < 0.0f ? 0.0f : x[i];
}

void ReluBackward(std::size_t n, const float* x, const float* gy, float* gx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0f) gx[i] += gy[i];
  }
}

float Dot(std::size_t n, const float* a, const float* b) {
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void SgdMomentum(std::size_t n, float lr, float momentum, const float* g,
                 float* v, float* p) {
  for (std::size_t i = 0; i < n; ++i) {
    const float mv = momentum * v[i];
    v[i] = mv + g[i];
    const float step = lr * v[i];
    p[i] = p[i] - step;
  }
}

}  // namespace scalar

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      "scalar",         scalar::Gemm, scalar::Axpy,       scalar::Add,
      scalar::Relu,     scalar::ReluBackward, scalar::Dot,
      scalar::SgdMomentum};
  return table;
}

#ifndef BODYSCENE_HAVE_AVX2
const KernelTable* avx2_kernels() { return nullptr; }
#endif

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active() {
  static const KernelTable* chosen = [] {
    const char* force = std::getenv("BODYSCENE_SIMD");
    if (force != nullptr && std::strcmp(force, "scalar") == 0) {
      return &scalar_kernels();
    }
    const KernelTable* simd = avx2_kernels();
    if (simd != nullptr && cpu_supports_avx2()) return simd;
    return &scalar_kernels();
  }();
  return *chosen;
}

}  // namespace bodyscene::kernels
