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

#ifndef BODYSCENE_STIM_STIMPIPE_H_
#define BODYSCENE_STIM_STIMPIPE_H_

#include <filesystem>
#include <string>
#include <vector>

#include "bodyscene/common/image.h"
#include "bodyscene/synth/dataset.h"
#include "bodyscene/synth/synth.h"

namespace bodyscene::stim {

enum class Version { kOriginal, kBodyOnly, kBackgroundOnly };

inline constexpr Version kAllVersions[] = {Version::kOriginal, Version::kBodyOnly,
                                           Version::kBackgroundOnly};

// "orig", "body", "bg": also the directory names of the versioned layout.
const char* version_name(Version v);
Version parse_version(const std::string& name);

inline constexpr double kDilationFactor = 1.2;

// Black outside the mask, unchanged inside.
Image body_only(const Image& frame, const Mask& mask);

// Pixelwise OR over all masks. Throws std::invalid_argument when empty.
Mask union_mask(const std::vector<Mask>& masks);

// Scales the set region about its centroid by a linear factor using
// nearest-neighbour resampling, then ORs with the input. An empty mask comes
// back unchanged.
Mask dilate(const Mask& mask, double factor);

struct InpaintOptions {
  double tolerance = 1e-4;
  int max_iterations = 10000;
};

// Harmonic fill of region: every region pixel converges to the mean of its
// in-frame 4-neighbours. Pixels outside region are copied bit-for-bit.
// Throws std::invalid_argument if region covers the whole frame.
Image inpaint(const Image& frame, const Mask& region, const InpaintOptions& options = {});

struct FlowOptions {
  int window_radius = 2;         // 5x5 window
  double min_eigenvalue = 1e-6;  // below this the flow is left at zero
  int max_iterations = 10;
  double step_tolerance = 1e-3;
  int min_level_size = 16;       // coarsest pyramid level is at least this big
};

// Dense Lucas-Kanade on luminance, coarse to fine. The result d satisfies
// frame_b(p + d(p)) ~= frame_a(p).
FlowField estimate_flow(const Image& frame_a, const Image& frame_b,
                        const FlowOptions& options = {});

// A clip transformed into one stimulus version. clip.masks holds the source
// masks; region is the inpainted support (background-only) and is empty
// for the other versions.
struct VersionedClip {
  Version version = Version::kOriginal;
  synth::Clip clip;
  Mask region;
};

VersionedClip make_original(const synth::Clip& clip);
VersionedClip make_body_only(const synth::Clip& clip);
VersionedClip make_background_only(const synth::Clip& clip,
                                   double dilation = kDilationFactor);
VersionedClip make_version(const synth::Clip& clip, Version version);

// Reads every clip of the source manifest and writes
// <out_root>/<version>/<clip_id>/... plus a manifest per version.
void write_versions(const synth::DatasetManifest& source,
                    const std::filesystem::path& out_root);

}  // namespace bodyscene::stim

#endif  // BODYSCENE_STIM_STIMPIPE_H_
