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

#ifndef BODYSCENE_EVAL_EVALSTATS_H_
#define BODYSCENE_EVAL_EVALSTATS_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bodyscene/nets/nets.h"
#include "bodyscene/stim/stimpipe.h"
#include "bodyscene/train/trainloop.h"
#include "json.hpp"

namespace bodyscene::eval {

// Frame-averaged softmax of one clip.
struct ClipScore {
  std::string clip_id;
  int label = 0;
  std::vector<double> probs;
};

std::vector<ClipScore> score_clips(const nets::Model& model, const train::StimulusSet& data,
                                   const std::vector<int>& clip_indices, stim::Version v);

// Argmax of probs over the listed classes; equal values go to the lowest
// class index.
int restricted_argmax(std::span<const double> probs, std::span<const int> choices);

// The true label plus choices - 1 distinct foils from subset, ascending. The
// draw depends only on (foil_seed, clip_id), so every model and version in a
// run sees the same choice set for a clip.
std::vector<int> draw_choices(int label, std::span<const int> subset, int choices,
                              std::uint64_t foil_seed, const std::string& clip_id);

struct ChoiceRecord {
  std::string clip_id;
  int label = 0;
  std::vector<int> choices;
  int predicted = 0;
  bool tie = false;  // the winning probability was shared inside the choice set
  bool correct = false;

  nlohmann::json to_json() const;
};

struct HumanAlignedResult {
  double accuracy = 0;
  std::vector<ChoiceRecord> records;
};

// Throws std::invalid_argument when the subset has fewer than
// choices_per_trial classes, repeats or leaves the class range, or misses a
// clip's label.
HumanAlignedResult human_aligned_accuracy(std::span<const ClipScore> scores,
                                          std::span<const int> subset, int choices_per_trial,
                                          std::uint64_t foil_seed);
// Same scoring with the choice sets given, one per score.
HumanAlignedResult human_aligned_accuracy(std::span<const ClipScore> scores,
                                          const std::vector<std::vector<int>>& choice_sets);

// Fraction of clips whose label is among the k largest probabilities (equal
// values rank the lower class index first). Requires 1 <= k <= K.
double topk_accuracy(std::span<const ClipScore> scores, int k);

struct TTestResult {
  double t = 0;
  int df = 0;
  double p = 1;  // two-sided
};

class DegenerateInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Paired t-test on a - b. Throws DegenerateInputError when every difference
// is the same, std::invalid_argument on length mismatch or n < 2.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// P(|T| >= |t|) for Student's t with df degrees of freedom, by adaptive
// Simpson integration of the density (absolute tolerance 1e-10).
double student_t_two_sided_p(double t, int df);

// Accuracies of one model on one stimulus version.
struct VersionScores {
  double human_aligned = 0;
  double top1 = 0;
  double top5 = 0;
};

struct ModelEval {
  std::string name;  // e.g. "baseline-frames"
  nets::ModelSpec spec;
  std::uint64_t seed = 0;
  std::array<VersionScores, 3> scores;               // indexed by stim::Version
  std::array<std::vector<ChoiceRecord>, 3> choices;  // indexed by stim::Version
};

// Published reference accuracies in percent, echoed for comparison only.
struct ReferenceRow {
  std::string name;
  double orig = 0, body = 0, bg = 0;
};
const std::vector<ReferenceRow>& reference_rows();

// Per-participant block accuracies, indexed by stim::Version.
using ParticipantScores = std::array<double, 3>;

struct HumanSummary {
  int participants = 0;
  std::array<double, 3> mean{};  // indexed by stim::Version
  std::optional<TTestResult> body_vs_bg;  // absent with < 2 participants or no spread
};

struct EvalReport {
  std::vector<ModelEval> models;
  std::string split;
  std::vector<int> category_subset;
  int choices_per_trial = 5;
  std::uint64_t foil_seed = 0;
  std::vector<ReferenceRow> reference;
  std::optional<HumanSummary> humans;
  // Directional comparisons on per-name means, e.g.
  // "domainnet-frames body > baseline-frames body".
  std::vector<std::pair<std::string, bool>> flags;

  nlohmann::json to_json() const;
  std::string to_text() const;
  // One row per (model, seed, version) for bar plots.
  std::string to_plot_csv() const;
};

struct ReportModel {
  std::string name;
  const nets::Model* model = nullptr;
  std::uint64_t seed = 0;
};

struct ReportOptions {
  synth::Split split = synth::Split::kTest;
  std::vector<int> category_subset;  // empty: every category
  int choices_per_trial = 5;         // capped at the subset size
  std::uint64_t foil_seed = 0;
};

// Throws std::invalid_argument when a clip of the split lacks a version.
EvalReport build_report(const std::vector<ReportModel>& models, const train::StimulusSet& data,
                        const ReportOptions& options,
                        const std::vector<ParticipantScores>& humans = {});

}  // namespace bodyscene::eval

#endif  // BODYSCENE_EVAL_EVALSTATS_H_
