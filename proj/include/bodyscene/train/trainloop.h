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

#ifndef BODYSCENE_TRAIN_TRAINLOOP_H_
#define BODYSCENE_TRAIN_TRAINLOOP_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bodyscene/common/rng.h"
#include "bodyscene/nets/nets.h"
#include "bodyscene/stim/stimpipe.h"
#include "bodyscene/synth/dataset.h"
#include "json.hpp"

namespace bodyscene::train {

// One clip in all three stimulus versions.
struct ClipVersions {
  synth::ClipRecord record;
  std::array<stim::VersionedClip, 3> versions;  // indexed by stim::Version

  const stim::VersionedClip& get(stim::Version v) const {
    return versions[static_cast<int>(v)];
  }
  int num_frames() const { return get(stim::Version::kOriginal).clip.num_frames(); }
  // Flow paired with frame t: the forward flow t -> t+1, and for the last
  // frame the flow into it.
  const FlowField& flow_for_frame(stim::Version v, int t) const;
};

// Every clip of a manifest with its versions, held in memory.
class StimulusSet {
 public:
  // Loads each clip and derives the three versions.
  static StimulusSet build(const synth::DatasetManifest& manifest);
  // Reads an on-disk versioned layout (<root>/{orig,body,bg}/...).
  static StimulusSet read_versioned(const std::filesystem::path& root);

  const synth::DatasetManifest& manifest() const { return manifest_; }
  const std::vector<ClipVersions>& clips() const { return clips_; }
  int num_classes() const { return manifest_.num_classes(); }
  std::vector<int> in_split(synth::Split split) const;

 private:
  synth::DatasetManifest manifest_;
  std::vector<ClipVersions> clips_;
};

// (clip index into the manifest's clip list, frame index, label).
struct FrameRef {
  int clip = 0;
  int frame = 0;
  int label = 0;

  bool operator==(const FrameRef&) const = default;
};

// Class-balanced frame sampler over one split: each draw picks a category
// uniformly, then a frame uniformly among that category's frames.
class FrameSampler {
 public:
  // Throws synth::DatasetError naming a category with no frames in split.
  FrameSampler(const synth::DatasetManifest& manifest, synth::Split split);

  std::vector<FrameRef> sample_batch(int batch_size, Rng& rng) const;
  int num_categories() const { return static_cast<int>(pool_.size()); }
  std::size_t frames_in_category(int c) const { return pool_.at(c).size(); }

 private:
  std::vector<std::vector<FrameRef>> pool_;
};

std::vector<FrameRef> sample_batch(const synth::DatasetManifest& manifest, synth::Split split,
                                   int batch_size, Rng& rng);

struct TrainConfig {
  int epochs = 20;
  int batches_per_epoch = 100;
  int batch_size = 32;
  float lr = 0.001f;
  float momentum = 0.9f;
  std::uint64_t seed = 1;
  double init_gain = 1.0;
  nets::ModelSpec model;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0;  // mean total loss over the epoch's batches
  double l_body = 0, l_background = 0, l_combined = 0;  // domainnet only
  double train_accuracy = 0;
  double val_accuracy = 0;
  double wall_seconds = 0;

  // wall_seconds is left out when include_time is false.
  nlohmann::json to_json(bool include_time = true) const;
};

struct TrainResult {
  nets::Model best;   // highest validation accuracy, ties to the later epoch
  nets::Model final;  // parameters after the last step
  int best_epoch = -1;  // -1 when no epoch ran
  double best_val_accuracy = 0;
  std::vector<EpochRecord> history;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Called after each epoch; may be empty.
using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& config, const StimulusSet& data,
                  const EpochCallback& on_epoch = {});

// Loss on one batch with no update; used for the initial-loss check.
double batch_loss(const nets::Model& model, const StimulusSet& data,
                  const std::vector<FrameRef>& batch);

// Frame-averaged softmax for a clip shown in version v. A baseline sees the
// version's frames. A domainnet sees (body, background) inputs: Original
// pairs the clip's body-only and background-only versions, body-only pairs
// with an all-black background input, background-only with an all-black
// body input. Returns K probabilities.
std::vector<double> video_probabilities(const nets::Model& model, const ClipVersions& clip,
                                        stim::Version v);

// Unrestricted argmax accuracy of video_probabilities over clips.
double video_accuracy(const nets::Model& model, const StimulusSet& data,
                      const std::vector<int>& clip_indices, stim::Version v);

}  // namespace bodyscene::train

#endif  // BODYSCENE_TRAIN_TRAINLOOP_H_
