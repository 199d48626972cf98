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

#include "bodyscene/tensor/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bodyscene {
namespace {

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PutU64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> Take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t U32() {
    auto s = Take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  std::uint64_t U64() {
    auto s = Take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(std::uint64_t spec_hash,
                                            std::span<const NamedTensor> params) {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  PutU64(out, spec_hash);
  PutU32(out, static_cast<std::uint32_t>(params.size()));
  for (const NamedTensor& p : params) {
    PutU32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    PutU32(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (int d : p.tensor.shape()) PutU32(out, static_cast<std::uint32_t>(d));
    for (float v : p.tensor.values()) PutU32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.Take(8);
  if (std::memcmp(magic.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError("not a checkpoint: bad magic");
  }
  Checkpoint ck;
  ck.spec_hash = r.U64();
  const std::uint32_t count = r.U32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor p;
    const std::uint32_t len = r.U32();
    auto name = r.Take(len);
    p.name.assign(name.begin(), name.end());
    const std::uint32_t rank = r.U32();
    if (rank == 0 || rank > 8) {
      throw CheckpointError("parameter '" + p.name + "' has invalid rank " +
                            std::to_string(rank));
    }
    Shape shape(rank);
    for (auto& d : shape) {
      const std::uint32_t e = r.U32();
      if (e == 0 || e > (1u << 28)) {
        throw CheckpointError("parameter '" + p.name + "' has invalid extent");
      }
      d = static_cast<int>(e);
    }
    std::vector<float> values(shape_numel(shape));
    for (float& v : values) v = std::bit_cast<float>(r.U32());
    p.tensor = Tensor::from(std::move(shape), std::move(values));
    ck.params.push_back(std::move(p));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, std::uint64_t spec_hash,
                     std::span<const NamedTensor> params) {
  const auto bytes = encode_checkpoint(spec_hash, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace bodyscene
