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

#include "bodyscene/tensor/tensor.h"

#include <algorithm>
#include <atomic>
#include <sstream>

namespace bodyscene {
namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local GradTape* t_active_tape = nullptr;

}  // namespace

struct Tensor::Impl {
  std::uint64_t id;
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;
  bool requires_grad = false;
};

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) {
      throw ShapeError("non-positive extent in shape " + shape_string(shape));
    }
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<float>(n, 0.0f), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<float> values,
                    bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  if (values.size() != n) {
    throw ShapeError("shape " + shape_string(shape) + " needs " +
                     std::to_string(n) + " values, got " +
                     std::to_string(values.size()));
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  t.impl_->shape = std::move(shape);
  t.impl_->values = std::move(values);
  t.impl_->requires_grad = requires_grad;
  if (requires_grad) t.impl_->grad.assign(n, 0.0f);
  return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

std::uint64_t Tensor::id() const { return impl_->id; }
const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->values.size(); }
std::span<const float> Tensor::values() const { return impl_->values; }
std::span<float> Tensor::mutable_values() const { return impl_->values; }

float Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on non-scalar tensor " + shape_string(shape()));
  }
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const float> Tensor::grad() const { return impl_->grad; }
std::span<float> Tensor::mutable_grad() const { return impl_->grad; }

void Tensor::zero_grad() const {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
  Tensor t = from(impl_->shape, impl_->values, impl_->requires_grad);
  if (has_grad()) t.impl_->grad = impl_->grad;
  return t;
}

Tensor Tensor::detach() const { return from(impl_->shape, impl_->values); }

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kRelu: return "relu";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kMaxPool2x2: return "max_pool2x2";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kDense: return "dense";
    case OpKind::kConcatChannels: return "concat_channels";
    case OpKind::kStackBatch: return "stack_batch";
    case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

GradTape::GradTape() : previous_(t_active_tape) { t_active_tape = this; }

GradTape::~GradTape() { t_active_tape = previous_; }

GradTape* GradTape::active() { return t_active_tape; }

void GradTape::record(OpKind kind, std::vector<Tensor> inputs,
                      const Tensor& output, std::function<void()> backward) {
  TapeEntry entry;
  entry.kind = kind;
  entry.input_ids.reserve(inputs.size());
  for (const Tensor& t : inputs) entry.input_ids.push_back(t.id());
  entry.output_id = output.id();
  entry.backward = std::move(backward);
  entries_.push_back(std::move(entry));
}

std::size_t GradTape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_string(loss.shape())
                                     : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument(
        "backward(): loss is not reachable from any recorded operation");
  }
  const float one = 1.0f;
  return backward(loss, std::span<const float>(&one, 1));
}

std::size_t GradTape::backward(const Tensor& output, std::span<const float> seed) {
  if (!output.defined() || seed.size() != output.numel()) {
    throw ShapeError("backward(): seed of " + std::to_string(seed.size()) +
                     " values for output " +
                     (output.defined() ? shape_string(output.shape()) : std::string("undefined")));
  }
  if (!output.requires_grad()) {
    throw std::invalid_argument(
        "backward(): output is not reachable from any recorded operation");
  }
  std::span<float> g = output.mutable_grad();
  for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
  std::size_t visited = 0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->backward();
    ++visited;
  }
  entries_.clear();
  return visited;
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (GradTape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

}  // namespace bodyscene
