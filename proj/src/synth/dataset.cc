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

#include "bodyscene/synth/dataset.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "bodyscene/common/rng.h"

namespace bodyscene::synth {
namespace fs = std::filesystem;
namespace {

std::string Numbered(const char* stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, index, ext);
  return buf;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw DatasetError("unknown split '" + name + "'");
}

std::vector<const ClipRecord*> DatasetManifest::in_split(Split s) const {
  std::vector<const ClipRecord*> out;
  for (const ClipRecord& r : clips) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

const ClipRecord& DatasetManifest::find(const std::string& id) const {
  for (const ClipRecord& r : clips) {
    if (r.id == id) return r;
  }
  throw DatasetError("no clip '" + id + "' in manifest");
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json clips_json = nlohmann::json::array();
  for (const ClipRecord& r : clips) {
    clips_json.push_back({{"id", r.id},
                          {"class", r.action_class},
                          {"background_class", r.background_class},
                          {"split", split_name(r.split)},
                          {"path", r.path},
                          {"frames", r.frames},
                          {"flows", r.has_flows}});
  }
  return {{"format", kManifestFormat},
          {"categories", categories},
          {"split_fractions", {{"train", train_fraction}, {"val", val_fraction}, {"test", test_fraction}}},
          {"generator", generator},
          {"clips", clips_json}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    if (j.value("format", "") != kManifestFormat) {
      throw DatasetError("manifest format is not " + std::string(kManifestFormat));
    }
    j.at("categories").get_to(m.categories);
    const auto& fr = j.at("split_fractions");
    m.train_fraction = fr.at("train").get<double>();
    m.val_fraction = fr.at("val").get<double>();
    m.test_fraction = fr.at("test").get<double>();
    m.generator = j.value("generator", nlohmann::json());
    for (const auto& c : j.at("clips")) {
      ClipRecord r;
      r.id = c.at("id").get<std::string>();
      r.action_class = c.at("class").get<int>();
      r.background_class = c.value("background_class", -1);
      r.split = parse_split(c.at("split").get<std::string>());
      r.path = c.at("path").get<std::string>();
      r.frames = c.at("frames").get<int>();
      r.has_flows = c.value("flows", false);
      m.clips.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::string DatasetManifest::dump() const { return to_json().dump(2) + "\n"; }

SplitCounts split_counts(const SynthConfig& config) {
  const int n = config.clips_per_class;
  SplitCounts s{};
  s.train = static_cast<int>(std::lround(n * config.train_fraction));
  s.val = static_cast<int>(std::lround(n * config.val_fraction));
  s.test = n - s.train - s.val;
  if (s.train < 1 || s.val < 1 || s.test < 1) {
    throw std::invalid_argument("synth config: " + std::to_string(n) +
                                " clips per class cannot fill train/val/test");
  }
  return s;
}

std::string clip_id(int class_idx, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "c%02d_%03d", class_idx, index);
  return buf;
}

std::uint64_t clip_seed(const SynthConfig& config, int class_idx, int index) {
  return derive_seed(config.seed, static_cast<std::uint64_t>(class_idx),
                     static_cast<std::uint64_t>(index));
}

DatasetManifest plan_dataset(const SynthConfig& config) {
  config.validate();
  const SplitCounts counts = split_counts(config);
  DatasetManifest m;
  for (int c = 0; c < config.num_classes; ++c) m.categories.push_back(category_name(c));
  m.train_fraction = config.train_fraction;
  m.val_fraction = config.val_fraction;
  m.test_fraction = 1.0 - config.train_fraction - config.val_fraction;
  m.generator = config.to_json();
  for (int c = 0; c < config.num_classes; ++c) {
    for (int i = 0; i < config.clips_per_class; ++i) {
      ClipRecord r;
      r.id = clip_id(c, i);
      r.action_class = c;
      r.split = i < counts.train ? Split::kTrain
                : i < counts.train + counts.val ? Split::kVal
                                                : Split::kTest;
      r.path = r.id;
      r.frames = config.frames_per_clip;
      r.has_flows = true;
      m.clips.push_back(std::move(r));
    }
  }
  return m;
}

void write_clip(const fs::path& dir, const Clip& clip) {
  fs::create_directories(dir);
  for (int t = 0; t < clip.num_frames(); ++t) {
    write_ppm(dir / Numbered("frame", t, "ppm"), clip.frames[t]);
    write_mask_pgm(dir / Numbered("mask", t, "pgm"), clip.masks[t]);
  }
  for (std::size_t t = 0; t < clip.flows.size(); ++t) {
    write_flow(dir / Numbered("flow", static_cast<int>(t), "f32"), clip.flows[t]);
  }
}

Clip read_clip(const fs::path& dir, const ClipRecord& record) {
  Clip clip;
  clip.id = record.id;
  clip.action_class = record.action_class;
  clip.background_class = record.background_class;
  for (int t = 0; t < record.frames; ++t) {
    const fs::path frame = dir / Numbered("frame", t, "ppm");
    const fs::path mask = dir / Numbered("mask", t, "pgm");
    if (!fs::exists(frame)) {
      throw DatasetError("clip '" + record.id + "': missing frame " + frame.string());
    }
    if (!fs::exists(mask)) {
      throw DatasetError("clip '" + record.id + "': missing mask for frame " +
                         std::to_string(t) + " (" + mask.string() + ")");
    }
    try {
      clip.frames.push_back(read_ppm(frame));
      clip.masks.push_back(read_mask_pgm(mask));
    } catch (const RasterError& e) {
      throw DatasetError("clip '" + record.id + "': " + e.what());
    }
    if (clip.frames.back().height != clip.masks.back().height ||
        clip.frames.back().width != clip.masks.back().width) {
      throw DatasetError("clip '" + record.id + "': mask " + std::to_string(t) +
                         " does not match its frame size");
    }
  }
  if (record.has_flows) {
    for (int t = 0; t + 1 < record.frames; ++t) {
      const fs::path flow = dir / Numbered("flow", t, "f32");
      try {
        clip.flows.push_back(read_flow(flow));
      } catch (const RasterError& e) {
        throw DatasetError("clip '" + record.id + "': " + e.what());
      }
    }
  }
  return clip;
}

void write_manifest(const fs::path& root, const DatasetManifest& m) {
  fs::create_directories(root);
  std::ofstream out(root / kManifestFile, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write manifest under " + root.string());
  out << m.dump();
}

DatasetManifest generate_dataset(const SynthConfig& config, const fs::path& root) {
  DatasetManifest m = plan_dataset(config);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) {
    throw DatasetError("output directory " + root.string() + " is not writable");
  }
  {
    const fs::path probe = root / ".write_probe";
    std::ofstream p(probe);
    if (!p) throw DatasetError("output directory " + root.string() + " is not writable");
    p.close();
    fs::remove(probe, ec);
  }
  for (ClipRecord& r : m.clips) {
    const int index = std::stoi(r.id.substr(4));
    Clip clip = generate_clip(config, r.action_class, clip_seed(config, r.action_class, index));
    clip.id = r.id;
    r.background_class = clip.background_class;
    write_clip(root / r.path, clip);
  }
  m.root = root;
  write_manifest(root, m);
  return m;
}

DatasetManifest load_external(const fs::path& manifest_path) {
  fs::path file = manifest_path;
  if (fs::is_directory(file)) file /= kManifestFile;
  std::ifstream in(file);
  if (!in) throw DatasetError("cannot open manifest " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("manifest " + file.string() + " is not valid JSON: " + e.what());
  }
  DatasetManifest m = DatasetManifest::from_json(j);
  m.root = file.parent_path();

  if (m.categories.empty()) throw DatasetError("manifest lists no categories");
  std::set<std::string> ids;
  for (const ClipRecord& r : m.clips) {
    if (!ids.insert(r.id).second) {
      throw DatasetError("clip '" + r.id + "' appears more than once");
    }
    if (r.action_class < 0 || r.action_class >= m.num_classes()) {
      throw DatasetError("clip '" + r.id + "' has class outside the category list");
    }
    if (r.frames < 1) throw DatasetError("clip '" + r.id + "' has no frames");
    const fs::path dir = m.root / r.path;
    if (!fs::is_directory(dir)) {
      throw DatasetError("clip '" + r.id + "': path " + dir.string() + " does not exist");
    }
    read_clip(dir, r);  // decodes every raster
  }
  return m;
}

void require_split_coverage(const DatasetManifest& m, Split split) {
  std::vector<int> count(m.categories.size(), 0);
  for (const ClipRecord& r : m.clips) {
    if (r.split == split) ++count[r.action_class];
  }
  for (std::size_t c = 0; c < count.size(); ++c) {
    if (count[c] == 0) {
      throw DatasetError("category '" + m.categories[c] + "' has no clips in split " +
                         split_name(split));
    }
  }
}

Clip load_clip(const DatasetManifest& manifest, const ClipRecord& record) {
  return read_clip(manifest.root / record.path, record);
}

}  // namespace bodyscene::synth
