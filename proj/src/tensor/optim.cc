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

#include "bodyscene/tensor/optim.h"

#include <stdexcept>
#include <string>

#include "bodyscene/tensor/kernels.h"

namespace bodyscene {

SgdMomentum::SgdMomentum(std::vector<Tensor> params, float learning_rate,
                         float momentum)
    : params_(std::move(params)),
      learning_rate_(learning_rate),
      momentum_(momentum) {
  if (!(learning_rate > 0.0f)) {
    throw std::invalid_argument("SGD learning rate must be positive");
  }
  if (!(momentum >= 0.0f && momentum < 1.0f)) {
    throw std::invalid_argument("SGD momentum must lie in [0,1)");
  }
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_) velocity_.emplace_back(p.numel(), 0.0f);
}

void SgdMomentum::step() {
  const kernels::KernelTable& k = kernels::active();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) {
      throw std::invalid_argument("SGD step: parameter " + std::to_string(i) +
                                  " " + shape_string(p.shape()) +
                                  " has no gradient");
    }
    k.sgd_momentum(p.numel(), learning_rate_, momentum_, p.grad().data(),
                   velocity_[i].data(), p.mutable_data());
  }
}

void SgdMomentum::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace bodyscene
