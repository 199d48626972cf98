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

#ifndef BODYSCENE_TENSOR_TENSOR_H_
#define BODYSCENE_TENSOR_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bodyscene {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Raised for incompatible operand shapes; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense float32 tensor with shared, reference-counted storage. Copies alias
// the same buffers; use clone() for a deep copy. Constness is shallow: a
// const handle can still write through to the shared buffers.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values,
                     bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  std::uint64_t id() const;

  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int axis) const { return shape().at(axis); }
  std::size_t numel() const;

  std::span<const float> values() const;
  std::span<float> mutable_values() const;
  const float* data() const { return values().data(); }
  float* mutable_data() const { return mutable_values().data(); }
  float item() const;

  bool requires_grad() const;

  // Gradient buffer. Allocated zero-filled for tensors that require grad;
  // empty otherwise.
  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad() const;
  void zero_grad() const;

  Tensor clone() const;
  // Same values, no gradient tracking.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

enum class OpKind {
  kConv2d,
  kRelu,
  kAdd,
  kMul,
  kMaxPool2x2,
  kGlobalAvgPool,
  kDense,
  kConcatChannels,
  kStackBatch,
  kSoftmaxCrossEntropy,
};

const char* op_kind_name(OpKind kind);

struct TapeEntry {
  OpKind kind;
  std::vector<std::uint64_t> input_ids;
  std::uint64_t output_id;
  // Propagates the output's gradient into the inputs' gradients. Holds the
  // operands and saved intermediates alive until the tape is released.
  std::function<void()> backward;
};

// Define-by-run tape. While a GradTape is alive it is the active tape of the
// constructing thread, and every primitive whose inputs require grad records
// itself here. Tapes nest; the innermost is active.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* active();

  void record(OpKind kind, std::vector<Tensor> inputs, const Tensor& output,
              std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, accumulating
  // into every requires-grad tensor's gradient. Releases the entries.
  // Returns the number of entries visited.
  std::size_t backward(const Tensor& loss);
  // Same with d(objective)/d(output) = seed for a non-scalar output.
  std::size_t backward(const Tensor& output, std::span<const float> seed);

  std::size_t size() const { return entries_.size(); }
  const std::vector<TapeEntry>& entries() const { return entries_; }

 private:
  std::vector<TapeEntry> entries_;
  GradTape* previous_ = nullptr;
};

// True when the output of an op over these inputs should be tracked.
bool should_record(std::initializer_list<const Tensor*> inputs);

}  // namespace bodyscene

#endif  // BODYSCENE_TENSOR_TENSOR_H_
