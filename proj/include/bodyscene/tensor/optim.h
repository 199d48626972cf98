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

#ifndef BODYSCENE_TENSOR_OPTIM_H_
#define BODYSCENE_TENSOR_OPTIM_H_

#include <vector>

#include "bodyscene/tensor/tensor.h"

namespace bodyscene {

// Plain SGD with heavy-ball momentum, no weight decay or schedule:
//   v <- momentum * v + g
//   p <- p - lr * v
// Parameters are updated in the order they were given.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor> params, float learning_rate, float momentum);

  void step();
  void zero_grad();

  float learning_rate() const { return learning_rate_; }
  float momentum() const { return momentum_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::vector<float>>& velocity() const { return velocity_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> velocity_;
  float learning_rate_;
  float momentum_;
};

}  // namespace bodyscene

#endif  // BODYSCENE_TENSOR_OPTIM_H_
