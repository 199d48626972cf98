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

#ifndef BODYSCENE_TENSOR_GRADCHECK_H_
#define BODYSCENE_TENSOR_GRADCHECK_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "bodyscene/tensor/tensor.h"

namespace bodyscene {

// Builds an output from the inputs with the differentiable ops.
using GradFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckOptions {
  float eps = 1e-2f;
  // Entries probed per input; all of them when the input is smaller.
  std::size_t max_entries = 64;
  std::uint64_t seed = 0;
  // Piecewise-linear ops (relu, max pooling) have kinks. When set, an entry
  // whose one-sided differences disagree by more than
  // kink_rel * max(|d+|, |d-|) + kink_abs straddles a kink and is skipped.
  bool skip_kinks = false;
  double kink_rel = 0.005;
  double kink_abs = 3e-4;
};

struct GradCheckResult {
  // ||analytic - numeric|| / max(||analytic||, ||numeric||) over the probed
  // entries; 0 when both are zero.
  double rel_error = 0;
  std::size_t entries = 0;  // compared
  std::size_t skipped = 0;  // straddled a kink
};

// Compares tape gradients of L = sum(w * f(inputs)), w a fixed random
// vector, against central differences of L evaluated in double.
GradCheckResult check_gradients(const GradFn& f, const std::vector<Tensor>& inputs,
                                const GradCheckOptions& options = {});

}  // namespace bodyscene

#endif  // BODYSCENE_TENSOR_GRADCHECK_H_
