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

#ifndef BODYSCENE_TENSOR_KERNELS_H_
#define BODYSCENE_TENSOR_KERNELS_H_

#include <cstddef>

namespace bodyscene::kernels {

// Row-major GEMM: C[m,n] (+)= A[m,k] * B[k,n].
// A is addressed through explicit strides so that a transposed operand can be
// read in place: A(i,p) = a[i * a_row_stride + p * a_col_stride].
// B and C are row-major with leading dimensions ldb and ldc.
using GemmFn = void (*)(int m, int n, int k, const float* a,
                        std::ptrdiff_t a_row_stride,
                        std::ptrdiff_t a_col_stride, const float* b,
                        std::ptrdiff_t ldb, float* c, std::ptrdiff_t ldc,
                        bool accumulate);

// y[i] += alpha * x[i]
using AxpyFn = void (*)(std::size_t n, float alpha, const float* x, float* y);
// out[i] = a[i] + b[i]
using AddFn = void (*)(std::size_t n, const float* a, const float* b,
                       float* out);
// out[i] = x[i] < 0 ? 0 : x[i]; NaN passes through so divergence stays visible
using ReluFn = void (*)(std::size_t n, const float* x, float* out);
// gx[i] += x[i] > 0 ? gy[i] : 0
using ReluBackwardFn = void (*)(std::size_t n, const float* x, const float* gy,
                                float* gx);
using DotFn = float (*)(std::size_t n, const float* a, const float* b);
// v = momentum * v + g;  p = p - lr * v
using SgdMomentumFn = void (*)(std::size_t n, float lr, float momentum,
                               const float* g, float* v, float* p);

// One implementation set. Elementwise entries are bit-identical across
// variants; gemm and dot may differ in the last bits (FMA, blocking order).
struct KernelTable {
  const char* name;
  GemmFn gemm;
  AxpyFn axpy;
  AddFn add;
  ReluFn relu;
  ReluBackwardFn relu_backward;
  DotFn dot;
  SgdMomentumFn sgd_momentum;
};

const KernelTable& scalar_kernels();

// nullptr when the build has no AVX2 variant compiled in.
const KernelTable* avx2_kernels();

bool cpu_supports_avx2();

// Chosen once per process: AVX2 when compiled in and supported by the CPU,
// unless BODYSCENE_SIMD=scalar is set in the environment.
const KernelTable& active();

}  // namespace bodyscene::kernels

#endif  // BODYSCENE_TENSOR_KERNELS_H_
