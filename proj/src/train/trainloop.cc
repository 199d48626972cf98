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

#include "bodyscene/train/trainloop.h"

#include <chrono>
#include <cmath>

#include "bodyscene/tensor/ops.h"
#include "bodyscene/tensor/optim.h"

namespace bodyscene::train {
namespace {

using nets::InputMode;
using nets::Topology;
using stim::Version;

Tensor VersionInput(const StimulusSet& data, const std::vector<FrameRef>& batch, Version v,
                    InputMode mode) {
  std::vector<const Image*> frames;
  std::vector<const FlowField*> flows;
  for (const FrameRef& r : batch) {
    const ClipVersions& cv = data.clips()[r.clip];
    frames.push_back(&cv.get(v).clip.frames[r.frame]);
    if (mode == InputMode::kFramesFlows) flows.push_back(&cv.flow_for_frame(v, r.frame));
  }
  return nets::make_input(frames, flows, mode);
}

Tensor ClipInput(const ClipVersions& cv, Version v, InputMode mode) {
  std::vector<const Image*> frames;
  std::vector<const FlowField*> flows;
  for (int t = 0; t < cv.num_frames(); ++t) {
    frames.push_back(&cv.get(v).clip.frames[t]);
    if (mode == InputMode::kFramesFlows) flows.push_back(&cv.flow_for_frame(v, t));
  }
  return nets::make_input(frames, flows, mode);
}

int ArgmaxRow(std::span<const float> row) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(row.size()); ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

int CountCorrect(const Tensor& logits, const std::vector<FrameRef>& batch) {
  const int k = logits.dim(1);
  int correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    correct += ArgmaxRow(logits.values().subspan(i * k, k)) == batch[i].label;
  }
  return correct;
}

struct StepOutput {
  Tensor total;
  Tensor l_body, l_background, l_combined;  // domainnet only
  Tensor logits;  // used for training accuracy
};

StepOutput Forward(const nets::Model& model, const StimulusSet& data,
                   const std::vector<FrameRef>& batch) {
  std::vector<int> labels;
  for (const FrameRef& r : batch) labels.push_back(r.label);
  const InputMode mode = model.spec().input_mode;
  StepOutput out;
  if (model.spec().topology == Topology::kBaseline) {
    out.logits = nets::baseline_forward(model, VersionInput(data, batch, Version::kOriginal, mode));
    out.total = softmax_cross_entropy(out.logits, labels);
  } else {
    const nets::DomainLogits logits =
        nets::domainnet_forward(model, VersionInput(data, batch, Version::kBodyOnly, mode),
                                VersionInput(data, batch, Version::kBackgroundOnly, mode));
    const nets::LossBreakdown loss = nets::domain_loss(logits, labels);
    out.total = loss.total;
    out.l_body = loss.l_body;
    out.l_background = loss.l_background;
    out.l_combined = loss.l_combined;
    out.logits = logits.combined;
  }
  return out;
}

}  // namespace

const FlowField& ClipVersions::flow_for_frame(Version v, int t) const {
  const auto& flows = get(v).clip.flows;
  if (flows.empty()) throw std::logic_error("clip " + record.id + " has no flows");
  return flows[std::min<std::size_t>(static_cast<std::size_t>(t), flows.size() - 1)];
}

StimulusSet StimulusSet::build(const synth::DatasetManifest& manifest) {
  StimulusSet s;
  s.manifest_ = manifest;
  for (const synth::ClipRecord& r : manifest.clips) {
    const synth::Clip clip = synth::load_clip(manifest, r);
    ClipVersions cv;
    cv.record = r;
    for (Version v : stim::kAllVersions) cv.versions[static_cast<int>(v)] = stim::make_version(clip, v);
    s.clips_.push_back(std::move(cv));
  }
  return s;
}

StimulusSet StimulusSet::read_versioned(const std::filesystem::path& root) {
  StimulusSet s;
  std::array<synth::DatasetManifest, 3> m;
  for (Version v : stim::kAllVersions) {
    m[static_cast<int>(v)] = synth::load_external(root / stim::version_name(v));
  }
  s.manifest_ = m[0];
  for (std::size_t i = 0; i < m[0].clips.size(); ++i) {
    ClipVersions cv;
    cv.record = m[0].clips[i];
    for (Version v : stim::kAllVersions) {
      const synth::DatasetManifest& vm = m[static_cast<int>(v)];
      if (i >= vm.clips.size() || vm.clips[i].id != cv.record.id) {
        throw synth::DatasetError(std::string("version '") + stim::version_name(v) +
                                  "' does not list clip '" + cv.record.id + "' in order");
      }
      stim::VersionedClip& vc = cv.versions[static_cast<int>(v)];
      vc.version = v;
      vc.clip = synth::load_clip(vm, vm.clips[i]);
    }
    s.clips_.push_back(std::move(cv));
  }
  return s;
}

std::vector<int> StimulusSet::in_split(synth::Split split) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    if (clips_[i].record.split == split) out.push_back(static_cast<int>(i));
  }
  return out;
}

FrameSampler::FrameSampler(const synth::DatasetManifest& manifest, synth::Split split)
    : pool_(manifest.categories.size()) {
  for (std::size_t i = 0; i < manifest.clips.size(); ++i) {
    const synth::ClipRecord& r = manifest.clips[i];
    if (r.split != split) continue;
    for (int t = 0; t < r.frames; ++t) {
      pool_.at(r.action_class).push_back({static_cast<int>(i), t, r.action_class});
    }
  }
  for (std::size_t c = 0; c < pool_.size(); ++c) {
    if (pool_[c].empty()) {
      throw synth::DatasetError("category '" + manifest.categories[c] + "' has no frames in split " +
                                synth::split_name(split));
    }
  }
}

std::vector<FrameRef> FrameSampler::sample_batch(int batch_size, Rng& rng) const {
  std::vector<FrameRef> batch;
  batch.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const auto& frames = pool_[rng.uniform_int(static_cast<int>(pool_.size()))];
    batch.push_back(frames[rng.uniform_int(static_cast<int>(frames.size()))]);
  }
  return batch;
}

std::vector<FrameRef> sample_batch(const synth::DatasetManifest& manifest, synth::Split split,
                                   int batch_size, Rng& rng) {
  return FrameSampler(manifest, split).sample_batch(batch_size, rng);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
  if (batches_per_epoch < 1) throw std::invalid_argument("train config: batches_per_epoch must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(lr > 0)) throw std::invalid_argument("train config: lr must be > 0");
  if (!(momentum >= 0 && momentum < 1)) {
    throw std::invalid_argument("train config: momentum must be in [0,1)");
  }
  if (!(init_gain >= 0)) throw std::invalid_argument("train config: init_gain must be >= 0");
  model.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},   {"batches_per_epoch", batches_per_epoch},
          {"batch_size", batch_size}, {"lr", lr},
          {"momentum", momentum}, {"seed", seed},
          {"init_gain", init_gain}, {"model", model.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("epochs", c.epochs);
    get("batches_per_epoch", c.batches_per_epoch);
    get("batch_size", c.batch_size);
    get("lr", c.lr);
    get("momentum", c.momentum);
    get("seed", c.seed);
    get("init_gain", c.init_gain);
    if (j.contains("model")) c.model = nets::ModelSpec::from_json(j.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json EpochRecord::to_json(bool include_time) const {
  nlohmann::json j = {{"epoch", epoch},
                      {"loss", loss},
                      {"l_body", l_body},
                      {"l_background", l_background},
                      {"l_combined", l_combined},
                      {"train_accuracy", train_accuracy},
                      {"val_accuracy", val_accuracy}};
  if (include_time) j["wall_seconds"] = wall_seconds;
  return j;
}

double batch_loss(const nets::Model& model, const StimulusSet& data,
                  const std::vector<FrameRef>& batch) {
  return Forward(model, data, batch).total.item();
}

std::vector<double> video_probabilities(const nets::Model& model, const ClipVersions& clip,
                                        Version v) {
  const InputMode mode = model.spec().input_mode;
  Tensor logits;
  if (model.spec().topology == Topology::kBaseline) {
    logits = nets::baseline_forward(model, ClipInput(clip, v, mode));
  } else {
    Tensor body, bg;
    if (v == Version::kOriginal || v == Version::kBodyOnly) {
      body = ClipInput(clip, Version::kBodyOnly, mode);
    }
    if (v == Version::kOriginal || v == Version::kBackgroundOnly) {
      bg = ClipInput(clip, Version::kBackgroundOnly, mode);
    }
    if (!body.defined()) body = Tensor::zeros(bg.shape());
    if (!bg.defined()) bg = Tensor::zeros(body.shape());
    logits = nets::domainnet_forward(model, body, bg).combined;
  }
  const int n = logits.dim(0), k = logits.dim(1);
  const std::vector<float> p = softmax_rows(logits);
  std::vector<double> mean(k, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) mean[c] += p[static_cast<std::size_t>(i) * k + c];
  }
  for (double& m : mean) m /= n;
  return mean;
}

double video_accuracy(const nets::Model& model, const StimulusSet& data,
                      const std::vector<int>& clip_indices, Version v) {
  if (clip_indices.empty()) return 0.0;
  int correct = 0;
  for (int i : clip_indices) {
    const ClipVersions& cv = data.clips()[i];
    const std::vector<double> p = video_probabilities(model, cv, v);
    int best = 0;
    for (int c = 1; c < static_cast<int>(p.size()); ++c) {
      if (p[c] > p[best]) best = c;
    }
    correct += best == cv.record.action_class;
  }
  return static_cast<double>(correct) / static_cast<double>(clip_indices.size());
}

TrainResult train(const TrainConfig& config, const StimulusSet& data,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (config.model.num_classes != data.num_classes()) {
    throw std::invalid_argument("train: model has " + std::to_string(config.model.num_classes) +
                                " classes, dataset has " + std::to_string(data.num_classes()));
  }
  const FrameSampler sampler(data.manifest(), synth::Split::kTrain);
  const std::vector<int> val = data.in_split(synth::Split::kVal);
  synth::require_split_coverage(data.manifest(), synth::Split::kVal);

  nets::Model model = nets::Model::create(config.model, config.seed, config.init_gain);
  TrainResult result{model.clone(), model, -1, 0.0, {}};
  SgdMomentum optimizer(model.parameters(), config.lr, config.momentum);
  Rng rng(derive_seed(config.seed, 0xba7c));
  const Version select_version = Version::kOriginal;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    int correct = 0, seen = 0;
    for (int b = 0; b < config.batches_per_epoch; ++b) {
      const std::vector<FrameRef> batch = sampler.sample_batch(config.batch_size, rng);
      optimizer.zero_grad();
      GradTape tape;
      const StepOutput out = Forward(model, data, batch);
      const float loss = out.total.item();
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(b));
      }
      tape.backward(out.total);
      optimizer.step();
      rec.loss += loss;
      if (out.l_body.defined()) {
        rec.l_body += out.l_body.item();
        rec.l_background += out.l_background.item();
        rec.l_combined += out.l_combined.item();
      }
      correct += CountCorrect(out.logits, batch);
      seen += static_cast<int>(batch.size());
    }
    const double nb = config.batches_per_epoch;
    rec.loss /= nb;
    rec.l_body /= nb;
    rec.l_background /= nb;
    rec.l_combined /= nb;
    rec.train_accuracy = static_cast<double>(correct) / seen;
    rec.val_accuracy = video_accuracy(model, data, val, select_version);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (rec.val_accuracy >= result.best_val_accuracy || result.best_epoch < 0) {
      result.best = model.clone();
      result.best_epoch = epoch;
      result.best_val_accuracy = rec.val_accuracy;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.final = model;
  return result;
}

}  // namespace bodyscene::train
