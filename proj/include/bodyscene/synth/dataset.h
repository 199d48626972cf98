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

#ifndef BODYSCENE_SYNTH_DATASET_H_
#define BODYSCENE_SYNTH_DATASET_H_

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bodyscene/synth/synth.h"
#include "json.hpp"

// On-disk dataset layout (see docs/formats.md):
//
//   <root>/manifest.json
//   <root>/<clip_id>/frame_0000.ppm   8-bit RGB
//   <root>/<clip_id>/mask_0000.pgm    0 / 255
//   <root>/<clip_id>/flow_0000.f32    optional, T-1 per clip
namespace bodyscene::synth {

inline constexpr const char* kManifestFormat = "bodyscene-manifest/1";
inline constexpr const char* kManifestFile = "manifest.json";

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { kTrain, kVal, kTest };
const char* split_name(Split s);
Split parse_split(const std::string& name);

struct ClipRecord {
  std::string id;
  int action_class = 0;
  int background_class = -1;  // -1 when unknown (external data)
  Split split = Split::kTrain;
  std::string path;  // relative to the manifest root
  int frames = 0;
  bool has_flows = false;

  bool operator==(const ClipRecord&) const = default;
};

struct DatasetManifest {
  std::vector<std::string> categories;
  std::vector<ClipRecord> clips;
  double train_fraction = 0.0;
  double val_fraction = 0.0;
  double test_fraction = 0.0;
  nlohmann::json generator;  // config echo; null for external data
  std::filesystem::path root;  // not serialized

  int num_classes() const { return static_cast<int>(categories.size()); }
  std::vector<const ClipRecord*> in_split(Split s) const;
  const ClipRecord& find(const std::string& clip_id) const;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  // Serialized manifest text, byte-stable for a given manifest.
  std::string dump() const;

  // Manifests compare by serialized content; root is ignored.
  bool operator==(const DatasetManifest& other) const { return dump() == other.dump(); }
};

// Number of clips per class going to (train, val, test).
struct SplitCounts {
  int train, val, test;
};
SplitCounts split_counts(const SynthConfig& config);

std::string clip_id(int class_idx, int index);
std::uint64_t clip_seed(const SynthConfig& config, int class_idx, int index);

// Builds the manifest for a config without rendering anything.
DatasetManifest plan_dataset(const SynthConfig& config);

// Renders every clip and writes the layout above under root.
DatasetManifest generate_dataset(const SynthConfig& config,
                                 const std::filesystem::path& root);

void write_clip(const std::filesystem::path& dir, const Clip& clip);
Clip read_clip(const std::filesystem::path& dir, const ClipRecord& record);

// Reads <root>/manifest.json (or the given file) and checks every invariant:
// unique clip ids (so splits are disjoint), classes in range, and every
// referenced frame and mask exists and decodes. Errors name the clip or path
// at fault.
DatasetManifest load_external(const std::filesystem::path& manifest_path);

// Throws DatasetError naming the first category with no clip in split.
void require_split_coverage(const DatasetManifest& m, Split split);

void write_manifest(const std::filesystem::path& root, const DatasetManifest& m);

// Loads the clip named by a record from the manifest's root.
Clip load_clip(const DatasetManifest& manifest, const ClipRecord& record);

}  // namespace bodyscene::synth

#endif  // BODYSCENE_SYNTH_DATASET_H_
