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

#ifndef BODYSCENE_TENSOR_CHECKPOINT_H_
#define BODYSCENE_TENSOR_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bodyscene/tensor/tensor.h"

// Parameter checkpoint file. All integers little-endian.
//
//   offset 0   8 bytes   magic "BSCKPT01"
//   offset 8   u64       model spec hash (FNV-1a 64 of the canonical spec text)
//   offset 16  u32       parameter count P
//   then P records:
//              u32       name length L
//              L bytes   name (UTF-8, no terminator)
//              u32       rank R
//              R x u32   extents
//              prod(extents) x f32   values, row-major, IEEE-754 binary32
namespace bodyscene {

inline constexpr char kCheckpointMagic[8] = {'B', 'S', 'C', 'K',
                                             'P', 'T', '0', '1'};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::uint64_t spec_hash = 0;
  std::vector<NamedTensor> params;
};

std::uint64_t fnv1a64(std::string_view text);

std::vector<std::uint8_t> encode_checkpoint(std::uint64_t spec_hash,
                                            std::span<const NamedTensor> params);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, std::uint64_t spec_hash,
                     std::span<const NamedTensor> params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bodyscene

#endif  // BODYSCENE_TENSOR_CHECKPOINT_H_
