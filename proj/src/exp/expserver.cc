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


#include "bodyscene/exp/expserver.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <utility>

#include "bodyscene/common/rng.h"
#include "bodyscene/tensor/checkpoint.h"

namespace bodyscene::exp {

using nlohmann::json;

int block_of(stim::Version v) {
  for (int b = 0; b < kNumBlocks; ++b) {
    if (kBlockOrder[b] == v) return b;
  }
  throw std::invalid_argument("unknown version");
}

int TrialPlan::total_trials() const {
  int n = 0;
  for (const auto& b : blocks) n += static_cast<int>(b.size());
  return n;
}

json TrialPlan::to_json() const {
  json j;
  j["participant"] = participant;
  j["seed"] = seed;
  j["blocks"] = json::array();
  for (int b = 0; b < kNumBlocks; ++b) {
    json trials = json::array();
    for (const PlannedTrial& t : blocks[b]) {
      trials.push_back({{"clip", t.clip_id}, {"label", t.label}, {"choices", t.choices}});
    }
    j["blocks"].push_back(
        {{"version", stim::version_name(kBlockOrder[b])}, {"trials", std::move(trials)}});
  }
  return j;
}

namespace {

const synth::ClipRecord* first_test_clip(const synth::DatasetManifest& m, int category) {
  for (const synth::ClipRecord& r : m.clips) {
    if (r.action_class == category && r.split == synth::Split::kTest) return &r;
  }
  return nullptr;
}

}  // namespace

TrialPlan build_session(const synth::DatasetManifest& manifest, int n_categories,
                        std::uint64_t seed, const PlanOptions& options) {
  if (options.choices < 2) throw std::invalid_argument("choices must be at least 2");
  if (n_categories < options.choices) {
    throw std::invalid_argument("n_categories (" + std::to_string(n_categories) +
                                ") is smaller than the number of choices (" +
                                std::to_string(options.choices) + ")");
  }

  std::vector<const synth::ClipRecord*> selected;
  if (!options.categories.empty()) {
    std::set<int> seen;
    for (int c : options.categories) {
      if (c < 0 || c >= manifest.num_classes()) {
        throw std::invalid_argument("category " + std::to_string(c) + " out of range");
      }
      if (!seen.insert(c).second) {
        throw std::invalid_argument("category " + std::to_string(c) + " listed twice");
      }
      const synth::ClipRecord* r = first_test_clip(manifest, c);
      if (r == nullptr) {
        throw std::invalid_argument("category '" + manifest.categories[c] +
                                    "' has no test clip");
      }
      selected.push_back(r);
    }
    if (static_cast<int>(selected.size()) < n_categories) {
      throw std::invalid_argument("only " + std::to_string(selected.size()) +
                                  " categories listed, need " + std::to_string(n_categories));
    }
    selected.resize(n_categories);
  } else {
    for (int c = 0; c < manifest.num_classes() && static_cast<int>(selected.size()) < n_categories;
         ++c) {
      if (const synth::ClipRecord* r = first_test_clip(manifest, c)) selected.push_back(r);
    }
    if (static_cast<int>(selected.size()) < n_categories) {
      throw std::invalid_argument("only " + std::to_string(selected.size()) +
                                  " categories have a test clip, need " +
                                  std::to_string(n_categories));
    }
  }

  std::vector<int> labels;
  for (const synth::ClipRecord* r : selected) labels.push_back(r->action_class);

  TrialPlan plan;
  plan.participant = options.participant;
  plan.seed = seed;
  Rng rng(seed);
  for (int b = 0; b < kNumBlocks; ++b) {
    std::vector<PlannedTrial>& trials = plan.blocks[b];
    for (const synth::ClipRecord* r : selected) {
      PlannedTrial t;
      t.clip_id = r->id;
      t.label = r->action_class;
      std::vector<int> pool;
      for (int l : labels) {
        if (l != t.label) pool.push_back(l);
      }
      // Partial Fisher-Yates: the first choices-1 entries are the foils.
      for (int i = 0; i < options.choices - 1; ++i) {
        const int j = i + rng.uniform_int(static_cast<int>(pool.size()) - i);
        std::swap(pool[i], pool[j]);
      }
      t.choices.assign(pool.begin(), pool.begin() + (options.choices - 1));
      t.choices.push_back(t.label);
      rng.shuffle(t.choices);
      trials.push_back(std::move(t));
    }
    rng.shuffle(trials);
  }
  return plan;
}

json TrialRecord::to_json() const {
  return {{"participant", participant},
          {"block", stim::version_name(kBlockOrder[block])},
          {"trial", trial},
          {"clip", clip_id},
          {"label", label},
          {"choices", choices},
          {"chosen", chosen},
          {"correct", correct},
          {"timestamp_ms", timestamp_ms}};
}

TrialRecord TrialRecord::from_json(const json& j) {
  TrialRecord r;
  r.participant = j.at("participant").get<std::string>();
  r.block = block_of(stim::parse_version(j.at("block").get<std::string>()));
  r.trial = j.at("trial").get<int>();
  r.clip_id = j.at("clip").get<std::string>();
  r.label = j.at("label").get<int>();
  r.choices = j.at("choices").get<std::vector<int>>();
  r.chosen = j.at("chosen").get<int>();
  r.correct = j.at("correct").get<bool>();
  r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  return r;
}

json TrialPayload::to_json() const {
  json j;
  j["status"] = "trial";
  j["participant"] = participant;
  j["block"] = stim::version_name(kBlockOrder[block]);
  j["block_number"] = block + 1;
  j["trial"] = trial;
  j["trials_in_block"] = trials_in_block;
  j["position"] = position;
  j["total_trials"] = total_trials;
  const std::string version = stim::version_name(kBlockOrder[block]);
  j["clip"] = {{"stimulus", stimulus},
               {"version", version},
               {"frames", frames},
               {"frame_rate", frame_rate},
               {"frame_url", "/clip/" + version + "/" + stimulus + "/{frame}"}};
  j["choices"] = json::array();
  for (std::size_t i = 0; i < choices.size(); ++i) {
    j["choices"].push_back({{"label", choices[i]}, {"name", choice_names[i]}});
  }
  return j;
}

std::array<double, kNumBlocks> BlockAccuracy::accuracy() const {
  std::array<double, kNumBlocks> a{};
  for (int b = 0; b < kNumBlocks; ++b) {
    const int denom = complete ? trials[b] : answered[b];
    a[b] = denom > 0 ? static_cast<double>(correct[b]) / denom
                     : std::numeric_limits<double>::quiet_NaN();
  }
  return a;
}

json BlockAccuracy::to_json() const {
  json j;
  j["complete"] = complete;
  j["partial"] = !complete;
  const auto acc = accuracy();
  json blocks = json::object();
  for (int b = 0; b < kNumBlocks; ++b) {
    json e = {{"trials", trials[b]}, {"answered", answered[b]}, {"correct", correct[b]}};
    e["accuracy"] = std::isnan(acc[b]) ? json(nullptr) : json(acc[b]);
    blocks[stim::version_name(kBlockOrder[b])] = std::move(e);
  }
  j["blocks"] = std::move(blocks);
  return j;
}

ResponseStore::ResponseStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty()) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw std::runtime_error("cannot open response store " + path_.string());
}

void ResponseStore::append(const TrialRecord& record) {
  if (path_.empty()) return;
  const std::string line = record.to_json().dump() + "\n";
  std::lock_guard<std::mutex> lock(mu_);
  out_ << line;
  out_.flush();
  if (!out_) throw std::runtime_error("write failed on " + path_.string());
}

std::vector<TrialRecord> ResponseStore::read(const std::filesystem::path& path) {
  std::vector<TrialRecord> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(TrialRecord::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) +
                               ": bad record: " + e.what());
    }
  }
  return out;
}

namespace {

std::string participant_id(int number) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%04d", number);
  return buf;
}

// -1 if id is not of the form produced by participant_id.
int participant_number(const std::string& id) {
  if (id.size() < 2 || id[0] != 'p') return -1;
  int n = 0;
  for (std::size_t i = 1; i < id.size(); ++i) {
    if (id[i] < '0' || id[i] > '9' || n > 1'000'000) return -1;
    n = n * 10 + (id[i] - '0');
  }
  return participant_id(n) == id ? n : -1;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

// (block, trial) of the first unanswered trial; block == kNumBlocks when done.
std::pair<int, int> pending(const TrialPlan& plan, std::size_t answered) {
  for (int b = 0; b < kNumBlocks; ++b) {
    const std::size_t n = plan.blocks[b].size();
    if (answered < n) return {b, static_cast<int>(answered)};
    answered -= n;
  }
  return {kNumBlocks, 0};
}

}  // namespace

Experiment::Experiment(synth::DatasetManifest manifest, ExperimentConfig config,
                       std::filesystem::path store_path)
    : manifest_(std::move(manifest)), config_(std::move(config)) {
  if (config_.frame_rate <= 0) throw std::invalid_argument("frame_rate must be positive");
  if (config_.n_categories == 0) {
    if (!config_.categories.empty()) {
      config_.n_categories = static_cast<int>(config_.categories.size());
    } else {
      for (int c = 0; c < manifest_.num_classes(); ++c) {
        if (first_test_clip(manifest_, c)) ++config_.n_categories;
      }
    }
  }
  // Validates the configuration up front.
  build_session(manifest_, config_.n_categories, 0,
                {config_.choices, config_.categories, std::string()});

  for (const synth::ClipRecord& r : manifest_.clips) {
    alias_to_clip_[stimulus_for_clip(r.id)] = r.id;
  }

  const std::vector<TrialRecord> previous =
      store_path.empty() ? std::vector<TrialRecord>{} : ResponseStore::read(store_path);
  for (const TrialRecord& r : previous) {
    const int number = participant_number(r.participant);
    if (number < 0) throw std::runtime_error("store: bad participant id '" + r.participant + "'");
    auto it = sessions_.find(r.participant);
    Session& s = it != sessions_.end() ? *it->second : add_session(number);
    check_pending(s, r.block, r.trial);
    const PlannedTrial& t = s.plan.blocks[r.block][r.trial];
    if (t.clip_id != r.clip_id || t.choices != r.choices || t.label != r.label ||
        r.correct != (r.chosen == t.label)) {
      throw std::runtime_error("store: record for " + r.participant + " does not match its plan");
    }
    s.records.push_back(r);
  }
  store_ = std::make_unique<ResponseStore>(std::move(store_path));
}

std::string Experiment::stimulus_for_clip(const std::string& clip_id) const {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "s%016llx",
                static_cast<unsigned long long>(derive_seed(config_.seed, fnv1a64(clip_id))));
  return buf;
}

std::optional<std::string> Experiment::clip_for_stimulus(const std::string& stimulus) const {
  auto it = alias_to_clip_.find(stimulus);
  if (it == alias_to_clip_.end()) return std::nullopt;
  return it->second;
}

Experiment::Session& Experiment::add_session(int number) {
  auto s = std::make_unique<Session>();
  const std::string id = participant_id(number);
  s->plan = build_session(manifest_, config_.n_categories, derive_seed(config_.seed, number),
                          {config_.choices, config_.categories, id});
  Session& ref = *s;
  sessions_[id] = std::move(s);
  next_number_ = std::max(next_number_, number + 1);
  return ref;
}

std::string Experiment::create_session() {
  std::unique_lock lock(sessions_mu_);
  return add_session(next_number_).plan.participant;
}

Experiment::Session& Experiment::session(const std::string& participant) const {
  std::shared_lock lock(sessions_mu_);
  auto it = sessions_.find(participant);
  if (it == sessions_.end()) throw NotFound("unknown participant '" + participant + "'");
  return *it->second;
}

void Experiment::check_pending(const Session& s, int block, int trial) const {
  const auto [pb, pt] = pending(s.plan, s.records.size());
  if (pb == kNumBlocks) {
    throw Conflict("session " + s.plan.participant + " is already complete");
  }
  if (block != pb || trial != pt) {
    throw Conflict("expected a response to " + std::string(stim::version_name(kBlockOrder[pb])) +
                   " trial " + std::to_string(pt) + ", got " +
                   (block >= 0 && block < kNumBlocks
                        ? std::string(stim::version_name(kBlockOrder[block]))
                        : "block " + std::to_string(block)) +
                   " trial " + std::to_string(trial));
  }
}

std::optional<TrialPayload> Experiment::next_trial(const std::string& participant) const {
  const Session& s = session(participant);
  std::lock_guard<std::mutex> lock(s.mu);
  const auto [b, t] = pending(s.plan, s.records.size());
  if (b == kNumBlocks) return std::nullopt;
  const PlannedTrial& pt = s.plan.blocks[b][t];
  TrialPayload p;
  p.participant = participant;
  p.block = b;
  p.trial = t;
  p.trials_in_block = static_cast<int>(s.plan.blocks[b].size());
  p.position = static_cast<int>(s.records.size());
  p.total_trials = s.plan.total_trials();
  p.stimulus = stimulus_for_clip(pt.clip_id);
  p.frames = manifest_.find(pt.clip_id).frames;
  p.frame_rate = config_.frame_rate;
  p.choices = pt.choices;
  for (int c : pt.choices) p.choice_names.push_back(manifest_.categories.at(c));
  return p;
}

TrialRecord Experiment::record_response(const std::string& participant, int block, int trial,
                                        int chosen) {
  Session& s = session(participant);
  std::lock_guard<std::mutex> lock(s.mu);
  check_pending(s, block, trial);
  const PlannedTrial& pt = s.plan.blocks[block][trial];
  if (std::find(pt.choices.begin(), pt.choices.end(), chosen) == pt.choices.end()) {
    throw std::invalid_argument("label " + std::to_string(chosen) +
                                " is not one of the presented choices");
  }
  TrialRecord r;
  r.participant = participant;
  r.block = block;
  r.trial = trial;
  r.clip_id = pt.clip_id;
  r.label = pt.label;
  r.choices = pt.choices;
  r.chosen = chosen;
  r.correct = chosen == pt.label;
  r.timestamp_ms = now_ms();
  store_->append(r);
  s.records.push_back(r);
  return r;
}

BlockAccuracy Experiment::participant_accuracy(const std::string& participant) const {
  const Session& s = session(participant);
  std::lock_guard<std::mutex> lock(s.mu);
  BlockAccuracy a;
  for (int b = 0; b < kNumBlocks; ++b) a.trials[b] = static_cast<int>(s.plan.blocks[b].size());
  for (const TrialRecord& r : s.records) {
    ++a.answered[r.block];
    if (r.correct) ++a.correct[r.block];
  }
  a.complete = static_cast<int>(s.records.size()) == s.plan.total_trials();
  return a;
}

TrialPlan Experiment::plan(const std::string& participant) const {
  const Session& s = session(participant);
  std::lock_guard<std::mutex> lock(s.mu);
  return s.plan;
}

std::vector<TrialRecord> Experiment::records(const std::string& participant) const {
  const Session& s = session(participant);
  std::lock_guard<std::mutex> lock(s.mu);
  return s.records;
}

std::vector<std::string> Experiment::participants() const {
  std::shared_lock lock(sessions_mu_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

int Experiment::current_block(const std::string& participant) const {
  const Session& s = session(participant);
  std::lock_guard<std::mutex> lock(s.mu);
  return pending(s.plan, s.records.size()).first;
}

}  // namespace bodyscene::exp
