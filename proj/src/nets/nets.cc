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

#include "bodyscene/nets/nets.h"

#include <cmath>
#include <map>
#include <stdexcept>

#include "bodyscene/common/rng.h"
#include "bodyscene/tensor/ops.h"

namespace bodyscene::nets {
namespace {

Tensor HeNormal(Shape shape, int fan_in, double gain, double base, Rng& rng) {
  const double sd = gain * std::sqrt(base / fan_in);
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = static_cast<float>(sd * rng.normal());
  return Tensor::from(std::move(shape), std::move(v), true);
}

StreamParams MakeStream(const ModelSpec& spec, Rng* rng, double gain) {
  auto conv = [&](int out, int in) {
    if (rng == nullptr) return Tensor::zeros({out, in, 3, 3}, true);
    return HeNormal({out, in, 3, 3}, in * 9, gain, 2.0, *rng);
  };
  const auto& w = spec.backbone.widths;
  StreamParams p;
  p.stem = conv(w[0], spec.in_channels());
  for (std::size_t s = 0; s < w.size(); ++s) {
    if (s > 0) p.transitions.push_back(conv(w[s], w[s - 1]));
    std::vector<Tensor> blocks;
    for (int b = 0; b < spec.backbone.blocks[s]; ++b) blocks.push_back(conv(w[s], w[s]));
    p.blocks.push_back(std::move(blocks));
  }
  p.head_weight = rng == nullptr ? Tensor::zeros({spec.num_classes, w.back()}, true)
                                 : HeNormal({spec.num_classes, w.back()}, w.back(), gain, 1.0, *rng);
  p.head_bias = Tensor::zeros({spec.num_classes}, true);
  return p;
}

std::vector<std::string> StreamPrefixes(Topology t) {
  if (t == Topology::kBaseline) return {"net."};
  return {"body.", "bg."};
}

}  // namespace

const char* topology_name(Topology t) {
  return t == Topology::kBaseline ? "baseline" : "domainnet";
}

Topology parse_topology(const std::string& name) {
  if (name == "baseline") return Topology::kBaseline;
  if (name == "domainnet") return Topology::kDomainNet;
  throw std::invalid_argument("unknown model '" + name + "' (expected baseline or domainnet)");
}

const char* input_mode_name(InputMode m) {
  return m == InputMode::kFrames ? "frames" : "frames+flows";
}

InputMode parse_input_mode(const std::string& name) {
  if (name == "frames") return InputMode::kFrames;
  if (name == "frames+flows") return InputMode::kFramesFlows;
  throw std::invalid_argument("unknown input mode '" + name +
                              "' (expected frames or frames+flows)");
}

void ModelSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("model spec: num_classes must be >= 2");
  const auto& w = backbone.widths;
  if (w.empty() || w.size() != backbone.blocks.size()) {
    throw std::invalid_argument("model spec: widths and blocks must be nonempty and equal length");
  }
  for (int x : w) {
    if (x < 1) throw std::invalid_argument("model spec: widths must be positive");
  }
  for (int b : backbone.blocks) {
    if (b < 0) throw std::invalid_argument("model spec: block counts must be >= 0");
  }
}

nlohmann::json ModelSpec::to_json() const {
  return {{"topology", topology_name(topology)},
          {"input_mode", input_mode_name(input_mode)},
          {"widths", backbone.widths},
          {"blocks", backbone.blocks},
          {"num_classes", num_classes}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  try {
    if (j.contains("topology")) s.topology = parse_topology(j.at("topology").get<std::string>());
    if (j.contains("input_mode")) {
      s.input_mode = parse_input_mode(j.at("input_mode").get<std::string>());
    }
    if (j.contains("widths")) j.at("widths").get_to(s.backbone.widths);
    if (j.contains("blocks")) j.at("blocks").get_to(s.backbone.blocks);
    if (j.contains("num_classes")) j.at("num_classes").get_to(s.num_classes);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("model spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::uint64_t ModelSpec::hash() const { return fnv1a64(to_json().dump()); }

void StreamParams::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "stem.w", stem});
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    const std::string stage = prefix + "s" + std::to_string(s) + ".";
    if (s > 0) out.push_back({stage + "transition.w", transitions[s - 1]});
    for (std::size_t b = 0; b < blocks[s].size(); ++b) {
      out.push_back({stage + "b" + std::to_string(b) + ".w", blocks[s][b]});
    }
  }
  out.push_back({prefix + "head.w", head_weight});
  out.push_back({prefix + "head.b", head_bias});
}

Model Model::create(const ModelSpec& spec, std::uint64_t seed, double init_gain) {
  spec.validate();
  Model m(spec);
  const int n = spec.topology == Topology::kBaseline ? 1 : 2;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, 0x5eed, static_cast<std::uint64_t>(i)));
    m.streams_.push_back(MakeStream(spec, &rng, init_gain));
  }
  return m;
}

Model Model::zeros(const ModelSpec& spec) {
  spec.validate();
  Model m(spec);
  const int n = spec.topology == Topology::kBaseline ? 1 : 2;
  for (int i = 0; i < n; ++i) m.streams_.push_back(MakeStream(spec, nullptr, 0.0));
  return m;
}

std::vector<NamedTensor> Model::named_parameters() const {
  std::vector<NamedTensor> out;
  const auto prefixes = StreamPrefixes(spec_.topology);
  for (std::size_t i = 0; i < streams_.size(); ++i) streams_[i].append_named(prefixes[i], out);
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (NamedTensor& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const NamedTensor& nt : named_parameters()) n += nt.tensor.numel();
  return n;
}

Model Model::clone() const {
  Model m = zeros(spec_);
  for (std::size_t i = 0; i < streams_.size(); ++i) {
    StreamParams& dst = m.streams_[i];
    const StreamParams& src = streams_[i];
    dst.stem = src.stem.clone();
    for (std::size_t t = 0; t < src.transitions.size(); ++t) {
      dst.transitions[t] = src.transitions[t].clone();
    }
    for (std::size_t s = 0; s < src.blocks.size(); ++s) {
      for (std::size_t b = 0; b < src.blocks[s].size(); ++b) {
        dst.blocks[s][b] = src.blocks[s][b].clone();
      }
    }
    dst.head_weight = src.head_weight.clone();
    dst.head_bias = src.head_bias.clone();
  }
  return m;
}

void Model::save(const std::filesystem::path& path) const {
  const std::vector<NamedTensor> params = named_parameters();
  save_checkpoint(path, spec_.hash(), params);
}

void Model::load_values(const Checkpoint& ckpt) {
  if (ckpt.spec_hash != spec_.hash()) {
    throw CheckpointError("checkpoint was written for a different model spec");
  }
  std::map<std::string, const Tensor*> by_name;
  for (const NamedTensor& nt : ckpt.params) by_name[nt.name] = &nt.tensor;
  for (NamedTensor& nt : named_parameters()) {
    const auto it = by_name.find(nt.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks parameter " + nt.name);
    if (it->second->shape() != nt.tensor.shape()) {
      throw CheckpointError("parameter " + nt.name + " has shape " +
                            shape_string(it->second->shape()) + ", expected " +
                            shape_string(nt.tensor.shape()));
    }
    std::copy(it->second->values().begin(), it->second->values().end(),
              nt.tensor.mutable_values().begin());
  }
  if (by_name.size() != named_parameters().size()) {
    throw CheckpointError("checkpoint has parameters this model does not");
  }
}

Model Model::load(const std::filesystem::path& path, const ModelSpec& spec) {
  Model m = zeros(spec);
  m.load_values(load_checkpoint(path));
  return m;
}

Tensor backbone_forward(const ModelSpec& spec, const StreamParams& p, const Tensor& input) {
  if (input.rank() != 4 || input.dim(1) != spec.in_channels()) {
    throw ShapeError("backbone expects [N," + std::to_string(spec.in_channels()) +
                     ",H,W] input, got " + shape_string(input.shape()));
  }
  Tensor x = max_pool2x2(relu(conv2d(input, p.stem, 1, 1)));
  const std::size_t stages = p.blocks.size();
  for (std::size_t s = 0; s < stages; ++s) {
    if (s > 0) x = relu(conv2d(x, p.transitions[s - 1], 1, 1));
    for (const Tensor& w : p.blocks[s]) x = add(x, relu(conv2d(x, w, 1, 1)));
    if (s + 1 < stages) x = max_pool2x2(x);
  }
  return dense(global_avg_pool(x), p.head_weight, p.head_bias);
}

Tensor baseline_forward(const Model& model, const Tensor& input) {
  if (model.spec().topology != Topology::kBaseline) {
    throw std::invalid_argument("baseline_forward on a domainnet model");
  }
  return backbone_forward(model.spec(), model.stream(0), input);
}

DomainLogits domainnet_forward(const Model& model, const Tensor& body_input,
                               const Tensor& bg_input) {
  if (model.spec().topology != Topology::kDomainNet) {
    throw std::invalid_argument("domainnet_forward on a baseline model");
  }
  if (body_input.shape() != bg_input.shape()) {
    throw ShapeError("body input " + shape_string(body_input.shape()) +
                     " and background input " + shape_string(bg_input.shape()) + " differ");
  }
  DomainLogits out;
  out.body = backbone_forward(model.spec(), model.stream(0), body_input);
  out.background = backbone_forward(model.spec(), model.stream(1), bg_input);
  out.combined = add(out.body, out.background);
  return out;
}

LossBreakdown domain_loss(const DomainLogits& logits, std::span<const int> labels) {
  LossBreakdown l;
  l.l_body = softmax_cross_entropy(logits.body, labels);
  l.l_background = softmax_cross_entropy(logits.background, labels);
  l.l_combined = softmax_cross_entropy(logits.combined, labels);
  l.total = add(add(l.l_body, l.l_background), l.l_combined);
  return l;
}

Tensor make_input(std::span<const Image* const> frames, std::span<const FlowField* const> flows,
                  InputMode mode) {
  if (frames.empty()) throw std::invalid_argument("make_input: no frames");
  const int n = static_cast<int>(frames.size());
  const int h = frames[0]->height, w = frames[0]->width;
  const int c = mode == InputMode::kFrames ? 3 : 5;
  if (mode == InputMode::kFramesFlows && flows.size() != frames.size()) {
    throw std::invalid_argument("make_input: frames+flows needs one flow per frame");
  }
  std::vector<float> v(static_cast<std::size_t>(n) * c * h * w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    const Image& img = *frames[i];
    if (img.height != h || img.width != w) {
      throw ShapeError("make_input: frame " + std::to_string(i) + " differs in size");
    }
    float* dst = v.data() + static_cast<std::size_t>(i) * c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      for (int ch = 0; ch < 3; ++ch) dst[ch * plane + p] = img.rgb[3 * p + ch];
    }
    if (mode == InputMode::kFramesFlows) {
      const FlowField& f = *flows[i];
      if (f.height != h || f.width != w) {
        throw ShapeError("make_input: flow " + std::to_string(i) + " differs in size");
      }
      for (std::size_t p = 0; p < plane; ++p) {
        dst[3 * plane + p] = f.uv[2 * p];
        dst[4 * plane + p] = f.uv[2 * p + 1];
      }
    }
  }
  return Tensor::from({n, c, h, w}, std::move(v));
}

}  // namespace bodyscene::nets
