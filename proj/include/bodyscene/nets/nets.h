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

#ifndef BODYSCENE_NETS_NETS_H_
#define BODYSCENE_NETS_NETS_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bodyscene/common/image.h"
#include "bodyscene/tensor/checkpoint.h"
#include "bodyscene/tensor/tensor.h"
#include "json.hpp"

namespace bodyscene::nets {

enum class Topology { kBaseline, kDomainNet };
enum class InputMode { kFrames, kFramesFlows };

const char* topology_name(Topology t);
Topology parse_topology(const std::string& name);
const char* input_mode_name(InputMode m);  // "frames" / "frames+flows"
InputMode parse_input_mode(const std::string& name);

// Residual backbone:
//   stem:    conv3x3(C -> widths[0]), relu, maxpool
//   stage s: [s > 0: conv3x3(widths[s-1] -> widths[s]), relu]
//            blocks[s] x { x + relu(conv3x3(x)) }
//            maxpool, except after the last stage
//   head:    global average pool, dense(widths.back() -> K) with bias
// Convolutions carry no bias.
struct BackboneSpec {
  std::vector<int> widths = {16, 32, 64};
  std::vector<int> blocks = {2, 2, 2};

  // Total spatial reduction before global pooling.
  int pooling_factor() const { return 1 << static_cast<int>(widths.size()); }
};

struct ModelSpec {
  Topology topology = Topology::kBaseline;
  InputMode input_mode = InputMode::kFrames;
  BackboneSpec backbone;
  int num_classes = 8;

  int in_channels() const { return input_mode == InputMode::kFrames ? 3 : 5; }
  void validate() const;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
  // FNV-1a 64 of the canonical JSON text; stored in checkpoints.
  std::uint64_t hash() const;
};

// Parameters of one backbone, in a fixed order.
struct StreamParams {
  Tensor stem;                      // [w0, C, 3, 3]
  std::vector<Tensor> transitions;  // one per stage after the first
  std::vector<std::vector<Tensor>> blocks;  // [stage][block], [w, w, 3, 3]
  Tensor head_weight;               // [K, w_last]
  Tensor head_bias;                 // [K]

  // Flattened with names prefixed by prefix (e.g. "body.").
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

class Model {
 public:
  // He-style fan-in initialization (std gain * sqrt(2 / fan_in) for
  // convolutions, gain * sqrt(1 / fan_in) for the head), zero head bias.
  static Model create(const ModelSpec& spec, std::uint64_t seed, double init_gain = 1.0);
  // Every parameter exactly zero.
  static Model zeros(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  const StreamParams& stream(int i) const { return streams_.at(i); }
  int num_streams() const { return static_cast<int>(streams_.size()); }

  // Names are "net." for a baseline, "body." / "bg." for a domainnet.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  // Deep copy.
  Model clone() const;

  void save(const std::filesystem::path& path) const;
  // Throws CheckpointError if the file was written for another spec or a
  // parameter is missing or has the wrong shape.
  static Model load(const std::filesystem::path& path, const ModelSpec& spec);
  void load_values(const Checkpoint& ckpt);

 private:
  explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}
  ModelSpec spec_;
  std::vector<StreamParams> streams_;
};

Tensor backbone_forward(const ModelSpec& spec, const StreamParams& params, const Tensor& input);

Tensor baseline_forward(const Model& model, const Tensor& input);

struct DomainLogits {
  Tensor body;
  Tensor background;
  Tensor combined;
};

DomainLogits domainnet_forward(const Model& model, const Tensor& body_input,
                               const Tensor& bg_input);

struct LossBreakdown {
  Tensor l_body;
  Tensor l_background;
  Tensor l_combined;
  Tensor total;  // (l_body + l_background) + l_combined
};

LossBreakdown domain_loss(const DomainLogits& logits, std::span<const int> labels);

// Packs frames (and flows for frames+flows) into [N, C, H, W]. flows may be
// empty for InputMode::kFrames.
Tensor make_input(std::span<const Image* const> frames, std::span<const FlowField* const> flows,
                  InputMode mode);

}  // namespace bodyscene::nets

#endif  // BODYSCENE_NETS_NETS_H_
