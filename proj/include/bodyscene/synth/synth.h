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

#ifndef BODYSCENE_SYNTH_SYNTH_H_
#define BODYSCENE_SYNTH_SYNTH_H_

#include <cstdint>
#include <string>
#include <vector>

#include "bodyscene/common/image.h"
#include "json.hpp"

// Procedural stand-in for a segmented action-video corpus.
//
// A clip shows one textured stick figure (the "body") over a static textured
// scene (the "background"). The action class fixes two things about the
// body: its pose (limb configuration, visible in any single frame) and its
// speed along a straight back-and-forth path (visible in the flow). Path
// direction, path length, position, and figure scale are drawn per clip and
// carry no class information. The background class picks the scene's hue and
// pattern family; it equals the action class with probability rho and is
// otherwise uniform over the other classes.
namespace bodyscene::synth {

inline constexpr int kMaxClasses = 18;

struct SynthConfig {
  int num_classes = 8;
  int clips_per_class = 15;
  int frames_per_clip = 12;
  int height = 32;
  int width = 32;
  double rho = 0.95;

  // Figure scale relative to the nominal ~20 px tall figure.
  double sprite_scale_min = 0.9;
  double sprite_scale_max = 1.1;
  // Speed of class c in px/frame: base_speed + c * speed_step.
  double base_speed = 0.5;
  double speed_step = 0.125;
  // Target one-way path length in px; realized as a whole number of frames
  // at the class speed so every frame-to-frame displacement has the class
  // speed exactly.
  double travel_min = 3.0;
  double travel_max = 4.0;

  // Background pattern period range in px.
  double texture_period_min = 5.0;
  double texture_period_max = 9.0;

  double train_fraction = 0.4;
  double val_fraction = 0.2;

  std::uint64_t seed = 1;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  double class_speed(int class_idx) const {
    return base_speed + speed_step * class_idx;
  }

  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

// Radius (px, at scale 1) of the disc that contains every pose.
double figure_radius();

struct Clip {
  std::string id;
  int action_class = 0;
  int background_class = 0;
  std::vector<Image> frames;  // T
  std::vector<Mask> masks;    // T, 1 = body pixel
  std::vector<FlowField> flows;  // T-1, empty when not available

  int num_frames() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
};

// Fully determined by (config, class_idx, seed). Frames are quantized to the
// 8-bit levels the on-disk raster holds.
Clip generate_clip(const SynthConfig& config, int class_idx, std::uint64_t seed);

// Per-clip centre of the figure at frame t (exposed for tests).
struct FigurePath {
  double start_x, start_y;
  double dir_x, dir_y;
  double speed;
  int leg_frames;
  double scale;
  double position_x(int t) const;
  double position_y(int t) const;
  double along(int t) const;
};

std::string category_name(int class_idx);

}  // namespace bodyscene::synth

#endif  // BODYSCENE_SYNTH_SYNTH_H_
