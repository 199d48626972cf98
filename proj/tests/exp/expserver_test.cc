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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "bodyscene/common/image.h"
#include "bodyscene/common/rng.h"
#include "common/temp_dir.h"
#include "httplib.h"

namespace bodyscene::exp {
namespace {

using nlohmann::json;
using stim::Version;

// K categories, each with one train clip and `test_clips` test clips. No
// files behind it; enough for everything except the clip endpoint.
synth::DatasetManifest MakeManifest(int k, int test_clips = 2) {
  synth::DatasetManifest m;
  for (int c = 0; c < k; ++c) {
    m.categories.push_back("action" + std::to_string(c));
    for (int i = 0; i <= test_clips; ++i) {
      synth::ClipRecord r;
      r.id = synth::clip_id(c, i);
      r.action_class = c;
      r.split = i == 0 ? synth::Split::kTrain : synth::Split::kTest;
      r.path = r.id;
      r.frames = 6;
      m.clips.push_back(r);
    }
  }
  return m;
}

std::multiset<std::pair<int, std::string>> TrialSet(const TrialPlan& p) {
  std::multiset<std::pair<int, std::string>> s;
  for (int b = 0; b < kNumBlocks; ++b) {
    for (const PlannedTrial& t : p.blocks[b]) s.insert({b, t.clip_id});
  }
  return s;
}

TEST(PlanTest, FiftyCategoriesGiveOneHundredFiftyTrials) {
  const TrialPlan p = build_session(MakeManifest(60), 50, 7);
  EXPECT_EQ(p.total_trials(), 150);
  for (const auto& block : p.blocks) EXPECT_EQ(block.size(), 50u);
}

TEST(PlanTest, ChoicesAreDistinctAndHoldTheTrueLabelOnce) {
  const TrialPlan p = build_session(MakeManifest(12), 10, 3);
  for (const auto& block : p.blocks) {
    for (const PlannedTrial& t : block) {
      ASSERT_EQ(t.choices.size(), 5u);
      EXPECT_EQ(std::count(t.choices.begin(), t.choices.end(), t.label), 1);
      EXPECT_EQ(std::set<int>(t.choices.begin(), t.choices.end()).size(), 5u);
      // Foils come from the selected categories only.
      for (int c : t.choices) EXPECT_LT(c, 10);
    }
  }
}

TEST(PlanTest, SameClipsInEveryBlockOnePerCategory) {
  const TrialPlan p = build_session(MakeManifest(8), 8, 11);
  std::set<std::string> first;
  for (const PlannedTrial& t : p.blocks[0]) first.insert(t.clip_id);
  EXPECT_EQ(first.size(), 8u);
  for (int b = 1; b < kNumBlocks; ++b) {
    std::set<std::string> s;
    for (const PlannedTrial& t : p.blocks[b]) s.insert(t.clip_id);
    EXPECT_EQ(s, first);
  }
  std::set<int> labels;
  for (const PlannedTrial& t : p.blocks[0]) labels.insert(t.label);
  EXPECT_EQ(labels.size(), 8u);
}

TEST(PlanTest, BlockOrder) {
  EXPECT_EQ(kBlockOrder[0], Version::kBackgroundOnly);
  EXPECT_EQ(kBlockOrder[1], Version::kBodyOnly);
  EXPECT_EQ(kBlockOrder[2], Version::kOriginal);
  const json j = build_session(MakeManifest(6), 6, 1).to_json();
  EXPECT_EQ(j["blocks"][0]["version"], "bg");
  EXPECT_EQ(j["blocks"][1]["version"], "body");
  EXPECT_EQ(j["blocks"][2]["version"], "orig");
}

TEST(PlanTest, SeedsChangeOrderNotTrialSet) {
  const synth::DatasetManifest m = MakeManifest(20);
  const TrialPlan a = build_session(m, 20, 1);
  const TrialPlan b = build_session(m, 20, 2);
  EXPECT_EQ(TrialSet(a), TrialSet(b));
  EXPECT_NE(a.blocks, b.blocks);
  EXPECT_EQ(build_session(m, 20, 1).blocks, a.blocks);
}

TEST(PlanTest, BlocksAreShuffledIndependently) {
  const TrialPlan p = build_session(MakeManifest(20), 20, 5);
  auto order = [&](int b) {
    std::vector<std::string> ids;
    for (const PlannedTrial& t : p.blocks[b]) ids.push_back(t.clip_id);
    return ids;
  };
  EXPECT_NE(order(0), order(1));
  EXPECT_NE(order(1), order(2));
}

TEST(PlanTest, RejectsTooFewCategories) {
  synth::DatasetManifest m = MakeManifest(6);
  // Category 5 loses its test clips.
  for (auto& r : m.clips) {
    if (r.action_class == 5) r.split = synth::Split::kTrain;
  }
  EXPECT_NO_THROW(build_session(m, 5, 1));
  EXPECT_THROW(build_session(m, 6, 1), std::invalid_argument);
  EXPECT_THROW(build_session(m, 4, 1), std::invalid_argument);  // fewer than 5 choices
  EXPECT_THROW(build_session(m, 5, 1, {5, {0, 1, 2, 3, 5}, ""}), std::invalid_argument);
}

TEST(PlanTest, ExplicitCategories) {
  const TrialPlan p = build_session(MakeManifest(10), 5, 1, {5, {9, 7, 5, 3, 1}, "x"});
  std::set<int> labels;
  for (const PlannedTrial& t : p.blocks[2]) labels.insert(t.label);
  EXPECT_EQ(labels, (std::set<int>{1, 3, 5, 7, 9}));
  EXPECT_EQ(p.participant, "x");
}

TEST(PlanTest, UsesFirstTestClipOfEachCategory) {
  const TrialPlan p = build_session(MakeManifest(5, 3), 5, 1);
  for (const PlannedTrial& t : p.blocks[0]) EXPECT_EQ(t.clip_id, synth::clip_id(t.label, 1));
}

ExperimentConfig Config(int n) {
  ExperimentConfig c;
  c.n_categories = n;
  c.seed = 99;
  return c;
}

TEST(ExperimentTest, FreshSessionStartsAtFirstTrialAndIsIdempotent) {
  Experiment e(MakeManifest(10), Config(10));
  const std::string pid = e.create_session();
  const auto t = e.next_trial(pid);
  ASSERT_TRUE(t.has_value());
  EXPECT_EQ(t->block, 0);
  EXPECT_EQ(t->trial, 0);
  EXPECT_EQ(t->position, 0);
  EXPECT_EQ(t->total_trials, 30);
  EXPECT_EQ(t->frames, 6);
  EXPECT_DOUBLE_EQ(t->frame_rate, 8.0);
  EXPECT_EQ(t->choice_names.size(), 5u);
  EXPECT_EQ(e.next_trial(pid)->to_json(), t->to_json());
  EXPECT_EQ(t->to_json()["block"], "bg");
}

TEST(ExperimentTest, StimulusAliasHidesClipId) {
  Experiment e(MakeManifest(6), Config(6));
  const std::string pid = e.create_session();
  const auto t = e.next_trial(pid);
  const std::string clip = e.plan(pid).blocks[0][0].clip_id;
  EXPECT_EQ(t->stimulus.find(clip), std::string::npos);
  EXPECT_EQ(e.clip_for_stimulus(t->stimulus), clip);
  EXPECT_FALSE(e.clip_for_stimulus("nope").has_value());
}

TEST(ExperimentTest, UnknownParticipant) {
  Experiment e(MakeManifest(6), Config(6));
  EXPECT_THROW(e.next_trial("p9999"), NotFound);
  EXPECT_THROW(e.record_response("p9999", 0, 0, 0), NotFound);
  EXPECT_THROW(e.participant_accuracy("zz"), NotFound);
}

TEST(ExperimentTest, CorrectnessIsComputedServerSide) {
  Experiment e(MakeManifest(6), Config(6));
  const std::string pid = e.create_session();
  const PlannedTrial t0 = e.plan(pid).blocks[0][0];
  const TrialRecord r = e.record_response(pid, 0, 0, t0.label);
  EXPECT_TRUE(r.correct);
  const PlannedTrial t1 = e.plan(pid).blocks[0][1];
  const int wrong = t1.choices[0] == t1.label ? t1.choices[1] : t1.choices[0];
  EXPECT_FALSE(e.record_response(pid, 0, 1, wrong).correct);
}

TEST(ExperimentTest, DuplicateAndOutOfOrderAreConflicts) {
  Experiment e(MakeManifest(6), Config(6));
  const std::string pid = e.create_session();
  const int label = e.plan(pid).blocks[0][0].label;
  e.record_response(pid, 0, 0, label);
  EXPECT_THROW(e.record_response(pid, 0, 0, label), Conflict);
  EXPECT_THROW(e.record_response(pid, 0, 2, label), Conflict);
  EXPECT_THROW(e.record_response(pid, 1, 1, label), Conflict);
  EXPECT_EQ(e.records(pid).size(), 1u);
  EXPECT_EQ(e.next_trial(pid)->trial, 1);
}

TEST(ExperimentTest, ChoiceMustBeOffered) {
  Experiment e(MakeManifest(10), Config(10));
  const std::string pid = e.create_session();
  const PlannedTrial t = e.plan(pid).blocks[0][0];
  int absent = 0;
  while (std::count(t.choices.begin(), t.choices.end(), absent)) ++absent;
  EXPECT_THROW(e.record_response(pid, 0, 0, absent), std::invalid_argument);
  EXPECT_TRUE(e.records(pid).empty());
}

// Answers every trial; `correct_in(block)` decides whether to pick the label.
template <typename F>
void RunScript(Experiment& e, const std::string& pid, F correct_in) {
  while (auto t = e.next_trial(pid)) {
    const PlannedTrial pt = e.plan(pid).blocks[t->block][t->trial];
    int choice = pt.label;
    if (!correct_in(t->block)) choice = pt.choices[0] == pt.label ? pt.choices[1] : pt.choices[0];
    e.record_response(pid, t->block, t->trial, choice);
  }
}

TEST(ExperimentTest, AllCorrectScript) {
  Experiment e(MakeManifest(50), Config(50));
  const std::string pid = e.create_session();
  RunScript(e, pid, [](int) { return true; });
  EXPECT_FALSE(e.next_trial(pid).has_value());
  const BlockAccuracy a = e.participant_accuracy(pid);
  EXPECT_TRUE(a.complete);
  EXPECT_EQ(a.accuracy(), (std::array<double, 3>{1.0, 1.0, 1.0}));
  EXPECT_EQ(e.records(pid).size(), 150u);
  EXPECT_THROW(e.record_response(pid, 2, 49, 0), Conflict);
}

TEST(ExperimentTest, OriginalOnlyScript) {
  Experiment e(MakeManifest(12), Config(12));
  const std::string pid = e.create_session();
  RunScript(e, pid, [](int block) { return kBlockOrder[block] == Version::kOriginal; });
  EXPECT_EQ(e.participant_accuracy(pid).accuracy(), (std::array<double, 3>{0.0, 0.0, 1.0}));
}

TEST(ExperimentTest, PartialSessionIsFlagged) {
  Experiment e(MakeManifest(6), Config(6));
  const std::string pid = e.create_session();
  BlockAccuracy a = e.participant_accuracy(pid);
  EXPECT_FALSE(a.complete);
  EXPECT_TRUE(std::isnan(a.accuracy()[0]));
  EXPECT_EQ(a.to_json()["partial"], true);
  EXPECT_TRUE(a.to_json()["blocks"]["bg"]["accuracy"].is_null());
  e.record_response(pid, 0, 0, e.plan(pid).blocks[0][0].label);
  a = e.participant_accuracy(pid);
  EXPECT_FALSE(a.complete);
  EXPECT_EQ(a.answered[0], 1);
  EXPECT_DOUBLE_EQ(a.accuracy()[0], 1.0);
}

TEST(ExperimentTest, BlocksAreServedInOrder) {
  Experiment e(MakeManifest(6), Config(6));
  const std::string pid = e.create_session();
  int last_block = 0;
  while (auto t = e.next_trial(pid)) {
    EXPECT_GE(t->block, last_block);
    EXPECT_EQ(e.current_block(pid), t->block);
    last_block = t->block;
    e.record_response(pid, t->block, t->trial, t->choices[0]);
  }
  EXPECT_EQ(e.current_block(pid), kNumBlocks);
}

// A participant who picks uniformly among 5 choices is right with p = 0.2.
// Per-participant block accuracy must sit within 3 sigma of 0.2 for 50
// trials, and the mean over many participants within 3 sigma of its own
// standard error.
TEST(ExperimentTest, RandomResponderScoresNearChance) {
  Experiment e(MakeManifest(50), Config(50));
  Rng rng(2024);
  const int participants = 200;
  const double sigma = std::sqrt(0.2 * 0.8 / 50);
  std::array<double, 3> sum{};
  int outside = 0;
  for (int i = 0; i < participants; ++i) {
    const std::string pid = e.create_session();
    while (auto t = e.next_trial(pid)) {
      e.record_response(pid, t->block, t->trial, t->choices[rng.uniform_int(5)]);
    }
    const auto acc = e.participant_accuracy(pid).accuracy();
    for (int b = 0; b < kNumBlocks; ++b) {
      sum[b] += acc[b];
      if (std::abs(acc[b] - 0.2) > 3 * sigma) ++outside;
    }
  }
  // P(|z| > 3) ~ 0.3% per block score; 600 scores expect ~2.
  EXPECT_LE(outside, 8);
  for (int b = 0; b < kNumBlocks; ++b) {
    EXPECT_NEAR(sum[b] / participants, 0.2, 3 * sigma / std::sqrt(participants));
  }
}

TEST(StoreTest, RecordRoundTrip) {
  TrialRecord r{"p0003", 1, 4, "c01_002", 1, {3, 1, 0, 4, 2}, 3, false, 1234567};
  const TrialRecord back = TrialRecord::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_EQ(r.to_json()["block"], "body");
}

TEST(StoreTest, ReplayReconstructsAccuracies) {
  testing::TempDir dir("store");
  const auto path = dir.path() / "responses.jsonl";
  const synth::DatasetManifest m = MakeManifest(10);
  std::vector<std::pair<std::string, BlockAccuracy>> expected;
  {
    Experiment e(m, Config(10), path);
    Rng rng(5);
    for (int i = 0; i < 3; ++i) {
      const std::string pid = e.create_session();
      int n = 0;
      while (auto t = e.next_trial(pid)) {
        if (i == 2 && ++n > 13) break;  // leave one session partial
        e.record_response(pid, t->block, t->trial, t->choices[rng.uniform_int(5)]);
      }
      expected.push_back({pid, e.participant_accuracy(pid)});
    }
  }
  EXPECT_EQ(ResponseStore::read(path).size(), 30u + 30u + 13u);

  Experiment replayed(m, Config(10), path);
  for (const auto& [pid, acc] : expected) {
    const BlockAccuracy got = replayed.participant_accuracy(pid);
    EXPECT_EQ(got.correct, acc.correct);
    EXPECT_EQ(got.answered, acc.answered);
    EXPECT_EQ(got.complete, acc.complete);
  }
  // The partial session resumes where it stopped, and new ids do not collide.
  EXPECT_EQ(replayed.next_trial(expected[2].first)->position, 13);
  EXPECT_EQ(replayed.create_session(), "p0004");
}

TEST(StoreTest, ReplayRejectsRecordsThatDoNotMatchThePlan) {
  testing::TempDir dir("store");
  const auto path = dir.path() / "responses.jsonl";
  {
    Experiment e(MakeManifest(6), Config(6), path);
    const std::string pid = e.create_session();
    e.record_response(pid, 0, 0, e.plan(pid).blocks[0][0].label);
  }
  std::string text = testing::ReadFile(path);
  text.replace(text.find("\"correct\":true"), 14, "\"correct\":false");
  std::ofstream(path, std::ios::binary) << text;
  EXPECT_THROW(Experiment(MakeManifest(6), Config(6), path), std::runtime_error);
}

TEST(StoreTest, ConcurrentParticipants) {
  testing::TempDir dir("store");
  const auto path = dir.path() / "responses.jsonl";
  Experiment e(MakeManifest(10), Config(10), path);
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&e] {
      const std::string pid = e.create_session();
      RunScript(e, pid, [](int) { return true; });
    });
  }
  for (auto& t : threads) t.join();
  const auto records = ResponseStore::read(path);
  ASSERT_EQ(records.size(), 120u);
  // Per participant the stored order is plan order.
  std::map<std::string, int> seen;
  for (const TrialRecord& r : records) {
    const int pos = seen[r.participant]++;
    EXPECT_EQ(r.block * 10 + r.trial, pos);
  }
  EXPECT_EQ(seen.size(), 4u);
}

// Server on a background thread for the lifetime of the fixture.
class HttpTest : public ::testing::Test {
 protected:
  void Start(synth::DatasetManifest m, int n, std::filesystem::path root = {}) {
    experiment_ = std::make_unique<Experiment>(std::move(m), Config(n), dir_.path() / "r.jsonl");
    server_ = std::make_unique<ExperimentServer>(*experiment_, root);
    const int port = server_->bind("127.0.0.1");
    thread_ = std::thread([this] { server_->serve(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port);
    client_->set_keep_alive(true);
    client_->set_tcp_nodelay(true);
  }
  void TearDown() override {
    client_.reset();
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
  }

  json Get(const std::string& path, int expect = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << ": " << res->body;
    return json::parse(res->body);
  }
  json Post(const std::string& path, const json& body, int expect) {
    auto res = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << ": " << res->body;
    return json::parse(res->body);
  }

  testing::TempDir dir_{"http"};
  std::unique_ptr<Experiment> experiment_;
  std::unique_ptr<ExperimentServer> server_;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

// A client that only sees the HTTP API answers correctly on even positions,
// refreshes (re-fetches) mid-session, and checks the server's per-block
// scores against its own tally.
TEST_F(HttpTest, ScriptedSessionOfOneHundredFiftyTrials) {
  Start(MakeManifest(50), 50);
  const json session = Post("/session", json::object(), 201);
  const std::string pid = session["participant"];
  EXPECT_EQ(session["total_trials"], 150);
  EXPECT_EQ(session["blocks"], json({"bg", "body", "orig"}));

  // The client cannot see labels, so it learns them from the server's
  // verdict: pick choices[0], and the record says whether that was right.
  std::map<std::string, std::array<int, 2>> tally;  // block -> (correct, total)
  std::vector<std::string> block_sequence;
  int responses = 0;
  for (;;) {
    json t = Get("/trial/" + pid);
    if (t["status"] == "done") break;
    if (responses == 75) {
      EXPECT_EQ(Get("/trial/" + pid), t);  // refresh
    }
    const std::string block = t["block"];
    if (block_sequence.empty() || block_sequence.back() != block) block_sequence.push_back(block);
    EXPECT_EQ(t["position"], responses);
    EXPECT_EQ(t["choices"].size(), 5u);
    const json body = {{"block", block}, {"trial", t["trial"]}, {"choice", t["choices"][0]["label"]}};
    const json r = Post("/response/" + pid, body, 200);
    EXPECT_EQ(r["participant"], pid);
    Post("/response/" + pid, body, 409);  // duplicate
    auto& [correct, total] = tally[block];
    correct += r["correct"].get<bool>() ? 1 : 0;
    ++total;
    ++responses;
  }
  EXPECT_EQ(responses, 150);
  EXPECT_EQ(block_sequence, (std::vector<std::string>{"bg", "body", "orig"}));
  EXPECT_EQ(experiment_->records(pid).size(), 150u);
  EXPECT_EQ(ResponseStore::read(dir_.path() / "r.jsonl").size(), 150u);

  const json results = Get("/results/" + pid);
  EXPECT_EQ(results["complete"], true);
  for (const auto& [block, ct] : tally) {
    EXPECT_EQ(ct[1], 50);
    EXPECT_EQ(results["blocks"][block]["correct"], ct[0]);
    EXPECT_DOUBLE_EQ(results["blocks"][block]["accuracy"].get<double>(), ct[0] / 50.0);
  }
}

TEST_F(HttpTest, ErrorStatuses) {
  Start(MakeManifest(6), 6);
  Get("/trial/p0042", 404);
  Get("/results/nobody", 404);
  const std::string pid = Post("/session", json::object(), 201)["participant"];
  const json t = Get("/trial/" + pid);
  Post("/response/" + pid, {{"block", "orig"}, {"trial", 0}, {"choice", 0}}, 409);
  Post("/response/" + pid, {{"block", "bg"}, {"trial", 0}}, 400);
  Post("/response/" + pid, {{"block", "sideways"}, {"trial", 0}, {"choice", 0}}, 400);
  auto res = client_->Post("/response/" + pid, "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  const json partial = Get("/results/" + pid);
  EXPECT_EQ(partial["partial"], true);
  EXPECT_TRUE(experiment_->records(pid).empty());
}

TEST_F(HttpTest, ClipFramesAreServedAsPpm) {
  testing::TempDir data("httpdata");
  synth::SynthConfig c;
  c.num_classes = 5;
  c.clips_per_class = 3;
  c.frames_per_clip = 3;
  const synth::DatasetManifest m = synth::generate_dataset(c, data.path() / "src");
  stim::write_versions(m, data.path() / "v");
  Start(synth::load_external(data.path() / "v" / "orig"), 5, data.path() / "v");

  const std::string pid = Post("/session", json::object(), 201)["participant"];
  const json t = Get("/trial/" + pid);
  const std::string stimulus = t["clip"]["stimulus"];
  EXPECT_EQ(t["clip"]["frames"], 3);
  EXPECT_EQ(t["clip"]["frame_url"], "/clip/bg/" + stimulus + "/{frame}");

  const std::string clip = experiment_->plan(pid).blocks[0][0].clip_id;
  auto res = client_->Get("/clip/bg/" + stimulus + "/2");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/x-portable-pixmap");
  const Image got = decode_ppm(res->body);
  const Image want = read_ppm(data.path() / "v" / "bg" / clip / "frame_0002.ppm");
  EXPECT_EQ(got.height, want.height);
  EXPECT_EQ(encode_ppm(got), encode_ppm(want));

  EXPECT_EQ(client_->Get("/clip/bg/" + stimulus + "/3")->status, 404);
  EXPECT_EQ(client_->Get("/clip/bg/" + clip + "/0")->status, 404);  // raw ids are not served
  // A participant still in the bg block may not fetch later versions.
  EXPECT_EQ(client_->Get("/clip/orig/" + stimulus + "/0?pid=" + pid)->status, 403);
  EXPECT_EQ(client_->Get("/clip/bg/" + stimulus + "/0?pid=" + pid)->status, 200);
}

}  // namespace
}  // namespace bodyscene::exp
