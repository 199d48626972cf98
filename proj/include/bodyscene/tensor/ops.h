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

#ifndef BODYSCENE_TENSOR_OPS_H_
#define BODYSCENE_TENSOR_OPS_H_

#include <span>

#include "bodyscene/tensor/tensor.h"

// Differentiable primitives. Each records itself on the active GradTape when
// any operand requires grad. Layout is NCHW throughout.
namespace bodyscene {

// input [N,C,H,W], kernel [F,C,kh,kw] -> [N,F,H',W'] with
// H' = (H + 2*pad - kh) / stride + 1. Zero padding, no bias.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad);

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// 2x2 window, stride 2; odd trailing rows/columns are dropped. Ties resolve to
// the first maximum in row-major window order.
Tensor max_pool2x2(const Tensor& x);

// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);

// x [N,D], weight [K,D], bias [K] -> x * weight^T + bias, [N,K]
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

// [N,C_i,H,W]... -> [N,sum C_i,H,W]
Tensor concat_channels(std::span<const Tensor> parts);

// Items of identical shape S -> [count, S...]
Tensor stack_batch(std::span<const Tensor> items);

// Mean over the batch of -log softmax(logits[n])[labels[n]], using
// max-subtraction. logits [N,K]; every label in [0,K).
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Row-wise softmax, no tape. logits [N,K].
std::vector<float> softmax_rows(const Tensor& logits);

}  // namespace bodyscene

#endif  // BODYSCENE_TENSOR_OPS_H_
