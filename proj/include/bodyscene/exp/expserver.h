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


#ifndef BODYSCENE_EXP_EXPSERVER_H_
#define BODYSCENE_EXP_EXPSERVER_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "bodyscene/stim/stimpipe.h"
#include "bodyscene/synth/dataset.h"
#include "json.hpp"

// Forced-choice behavioral experiment: three blocks (background-only, then
// body-only, then original), one clip per category per block, five choices
// per trial. Record and payload schemas are in docs/formats.md.
namespace bodyscene::exp {

inline constexpr stim::Version kBlockOrder[3] = {
    stim::Version::kBackgroundOnly, stim::Version::kBodyOnly, stim::Version::kOriginal};
inline constexpr int kNumBlocks = 3;
inline constexpr int kDefaultChoices = 5;

// Position of v in kBlockOrder.
int block_of(stim::Version v);

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Out-of-order or duplicate response; nothing was stored.
class Conflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlannedTrial {
  std::string clip_id;
  int label = 0;
  std::vector<int> choices;  // presentation order

  bool operator==(const PlannedTrial&) const = default;
};

struct TrialPlan {
  std::string participant;
  std::uint64_t seed = 0;
  std::array<std::vector<PlannedTrial>, kNumBlocks> blocks;  // kBlockOrder

  int total_trials() const;
  nlohmann::json to_json() const;
};

struct PlanOptions {
  int choices = kDefaultChoices;
  // Categories to use, in any order. Empty: the first n_categories
  // categories (by index) that have a test clip.
  std::vector<int> categories;
  std::string participant;
};

// Each selected category contributes its first test clip (manifest order),
// so the trial set does not depend on seed; trial order and foils do. Foils
// come from the other selected categories. Throws std::invalid_argument if
// there are fewer usable categories than n_categories or than choices.
TrialPlan build_session(const synth::DatasetManifest& manifest, int n_categories,
                        std::uint64_t seed, const PlanOptions& options = {});

struct TrialRecord {
  std::string participant;
  int block = 0;  // index into kBlockOrder
  int trial = 0;  // index within the block
  std::string clip_id;
  int label = 0;
  std::vector<int> choices;
  int chosen = 0;
  bool correct = false;
  std::int64_t timestamp_ms = 0;  // server wall clock

  nlohmann::json to_json() const;
  static TrialRecord from_json(const nlohmann::json& j);
};

// What a client needs to run one trial. stimulus is an opaque per-server
// alias for the clip so the URL does not reveal the category.
struct TrialPayload {
  std::string participant;
  int block = 0;
  int trial = 0;
  int trials_in_block = 0;
  int position = 0;  // across blocks
  int total_trials = 0;
  std::string stimulus;
  int frames = 0;
  double frame_rate = 0;
  std::vector<int> choices;
  std::vector<std::string> choice_names;

  nlohmann::json to_json() const;
};

struct BlockAccuracy {
  std::array<int, kNumBlocks> trials{};
  std::array<int, kNumBlocks> answered{};
  std::array<int, kNumBlocks> correct{};
  bool complete = false;

  // correct / trials per block once complete. For a partial session the
  // denominator is the answered count; a block with none answered is NaN.
  std::array<double, kNumBlocks> accuracy() const;
  nlohmann::json to_json() const;
};

// One JSON record per line. Appends are serialized and flushed before
// returning. An empty path keeps records in memory only.
class ResponseStore {
 public:
  explicit ResponseStore(std::filesystem::path path = {});

  void append(const TrialRecord& record);
  const std::filesystem::path& path() const { return path_; }

  // Throws std::runtime_error naming the line of a malformed record.
  static std::vector<TrialRecord> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mu_;
};

struct ExperimentConfig {
  int n_categories = 0;  // 0: every category with a test clip
  std::uint64_t seed = 1;
  int choices = kDefaultChoices;
  double frame_rate = 8.0;
  std::vector<int> categories;  // see PlanOptions
};

class Experiment {
 public:
  // Replays any records already in the store at store_path; sessions are
  // rebuilt from their participant id. Throws std::runtime_error if a record
  // does not match the plan it claims to answer.
  Experiment(synth::DatasetManifest manifest, ExperimentConfig config,
             std::filesystem::path store_path = {});

  std::string create_session();

  // First unanswered trial, or nullopt once every trial is answered.
  std::optional<TrialPayload> next_trial(const std::string& participant) const;

  TrialRecord record_response(const std::string& participant, int block, int trial,
                              int chosen);

  BlockAccuracy participant_accuracy(const std::string& participant) const;

  TrialPlan plan(const std::string& participant) const;
  std::vector<TrialRecord> records(const std::string& participant) const;
  std::vector<std::string> participants() const;

  // Index of the block holding the next trial; kNumBlocks when done.
  int current_block(const std::string& participant) const;

  // Clip id behind a stimulus alias, or nullopt.
  std::optional<std::string> clip_for_stimulus(const std::string& stimulus) const;
  std::string stimulus_for_clip(const std::string& clip_id) const;

  const synth::DatasetManifest& manifest() const { return manifest_; }
  const ExperimentConfig& config() const { return config_; }

 private:
  struct Session {
    TrialPlan plan;
    std::vector<TrialRecord> records;
    mutable std::mutex mu;
  };

  Session& session(const std::string& participant) const;
  Session& add_session(int number);
  void check_pending(const Session& s, int block, int trial) const;

  synth::DatasetManifest manifest_;
  ExperimentConfig config_;
  std::map<std::string, std::string> alias_to_clip_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  int next_number_ = 1;
  std::unique_ptr<ResponseStore> store_;
};

// HTTP front end:
//   POST /session                       -> {"participant": ...}
//   GET  /trial/{pid}                   -> trial payload or {"status":"done"}
//   POST /response/{pid}                -> stored record; 409 on conflict
//   GET  /results/{pid}                 -> per-block accuracy
//   GET  /clip/{version}/{stimulus}/{frame_idx}[?pid=]  -> binary PPM
// Clip frames are read from a versioned layout, <root>/{orig,body,bg}/.
// With ?pid= a version from a block the participant has not reached yet is
// refused with 403.
class ExperimentServer {
 public:
  ExperimentServer(Experiment& experiment, std::filesystem::path versioned_root);
  ~ExperimentServer();
  ExperimentServer(const ExperimentServer&) = delete;
  ExperimentServer& operator=(const ExperimentServer&) = delete;

  // Returns the bound port, or throws.
  int bind(const std::string& host, int port = 0);
  // Blocks until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bodyscene::exp

#endif  // BODYSCENE_EXP_EXPSERVER_H_
