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

#include "bodyscene/eval/evalstats.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include "bodyscene/common/rng.h"
#include "bodyscene/tensor/checkpoint.h"

namespace bodyscene::eval {
namespace {

using stim::Version;

void CheckSubset(std::span<const int> subset, int num_classes) {
  std::vector<bool> seen(num_classes, false);
  for (int c : subset) {
    if (c < 0 || c >= num_classes) {
      throw std::invalid_argument("category subset: class " + std::to_string(c) +
                                  " outside [0, " + std::to_string(num_classes) + ")");
    }
    if (seen[c]) {
      throw std::invalid_argument("category subset: class " + std::to_string(c) + " repeated");
    }
    seen[c] = true;
  }
}

ChoiceRecord Score(const ClipScore& s, std::vector<int> choices) {
  std::sort(choices.begin(), choices.end());
  ChoiceRecord r;
  r.clip_id = s.clip_id;
  r.label = s.label;
  r.predicted = restricted_argmax(s.probs, choices);
  int at_max = 0;
  for (int c : choices) at_max += s.probs[c] == s.probs[r.predicted];
  r.tie = at_max > 1;
  r.correct = r.predicted == s.label;
  r.choices = std::move(choices);
  return r;
}

double StudentDensity(double x, int df) {
  const double v = df;
  const double log_norm = std::lgamma((v + 1) / 2) - std::lgamma(v / 2) -
                          0.5 * std::log(v * std::numbers::pi);
  return std::exp(log_norm - (v + 1) / 2 * std::log1p(x * x / v));
}

double SimpsonStep(const std::function<double(double)>& f, double a, double b, double fa,
                   double fm, double fb, double whole, double eps, int depth) {
  const double m = (a + b) / 2;
  const double lm = (a + m) / 2, rm = (m + b) / 2;
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15 * eps) return left + right + diff / 15;
  return SimpsonStep(f, a, m, fa, flm, fm, left, eps / 2, depth - 1) +
         SimpsonStep(f, m, b, fm, frm, fb, right, eps / 2, depth - 1);
}

double AdaptiveSimpson(const std::function<double(double)>& f, double a, double b,
                       double eps) {
  const double fa = f(a), fb = f(b), fm = f((a + b) / 2);
  const double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  return SimpsonStep(f, a, b, fa, fm, fb, whole, eps, 50);
}

std::string Percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%6.2f", 100.0 * x);
  return buf;
}

}  // namespace

std::vector<ClipScore> score_clips(const nets::Model& model, const train::StimulusSet& data,
                                   const std::vector<int>& clip_indices, Version v) {
  std::vector<ClipScore> out;
  out.reserve(clip_indices.size());
  for (int i : clip_indices) {
    const train::ClipVersions& cv = data.clips().at(i);
    out.push_back({cv.record.id, cv.record.action_class, train::video_probabilities(model, cv, v)});
  }
  return out;
}

int restricted_argmax(std::span<const double> probs, std::span<const int> choices) {
  if (choices.empty()) throw std::invalid_argument("restricted_argmax: empty choice set");
  int best = -1;
  for (int c : choices) {
    if (c < 0 || c >= static_cast<int>(probs.size())) {
      throw std::invalid_argument("restricted_argmax: choice " + std::to_string(c) +
                                  " outside the output range");
    }
    if (best < 0 || probs[c] > probs[best] || (probs[c] == probs[best] && c < best)) best = c;
  }
  return best;
}

std::vector<int> draw_choices(int label, std::span<const int> subset, int choices,
                              std::uint64_t foil_seed, const std::string& clip_id) {
  if (choices < 1 || static_cast<int>(subset.size()) < choices) {
    throw std::invalid_argument("choice set of " + std::to_string(choices) + " needs at least " +
                                std::to_string(choices) + " categories, subset has " +
                                std::to_string(subset.size()));
  }
  std::vector<int> foils;
  for (int c : subset) {
    if (c != label) foils.push_back(c);
  }
  if (foils.size() == subset.size()) {
    throw std::invalid_argument("clip " + clip_id + ": label " + std::to_string(label) +
                                " not in the category subset");
  }
  std::sort(foils.begin(), foils.end());
  Rng rng(derive_seed(foil_seed, fnv1a64(clip_id)));
  rng.shuffle(foils);
  std::vector<int> out(foils.begin(), foils.begin() + (choices - 1));
  out.push_back(label);
  std::sort(out.begin(), out.end());
  return out;
}

nlohmann::json ChoiceRecord::to_json() const {
  return {{"clip", clip_id}, {"label", label},     {"choices", choices},
          {"predicted", predicted}, {"tie", tie}, {"correct", correct}};
}

HumanAlignedResult human_aligned_accuracy(std::span<const ClipScore> scores,
                                          std::span<const int> subset, int choices_per_trial,
                                          std::uint64_t foil_seed) {
  if (static_cast<int>(subset.size()) < choices_per_trial) {
    throw std::invalid_argument("human_aligned_accuracy: subset of " +
                                std::to_string(subset.size()) + " categories is smaller than " +
                                std::to_string(choices_per_trial) + " choices");
  }
  std::vector<std::vector<int>> sets;
  sets.reserve(scores.size());
  for (const ClipScore& s : scores) {
    CheckSubset(subset, static_cast<int>(s.probs.size()));
    sets.push_back(draw_choices(s.label, subset, choices_per_trial, foil_seed, s.clip_id));
  }
  return human_aligned_accuracy(scores, sets);
}

HumanAlignedResult human_aligned_accuracy(std::span<const ClipScore> scores,
                                          const std::vector<std::vector<int>>& choice_sets) {
  if (choice_sets.size() != scores.size()) {
    throw std::invalid_argument("human_aligned_accuracy: " + std::to_string(choice_sets.size()) +
                                " choice sets for " + std::to_string(scores.size()) + " clips");
  }
  HumanAlignedResult result;
  int correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::vector<int>& set = choice_sets[i];
    if (std::find(set.begin(), set.end(), scores[i].label) == set.end()) {
      throw std::invalid_argument("clip " + scores[i].clip_id +
                                  ": choice set lacks the true label");
    }
    result.records.push_back(Score(scores[i], set));
    correct += result.records.back().correct;
  }
  if (!scores.empty()) result.accuracy = static_cast<double>(correct) / scores.size();
  return result;
}

double topk_accuracy(std::span<const ClipScore> scores, int k) {
  if (scores.empty()) return 0.0;
  int correct = 0;
  for (const ClipScore& s : scores) {
    const int n = static_cast<int>(s.probs.size());
    if (k < 1 || k > n) {
      throw std::invalid_argument("topk_accuracy: k = " + std::to_string(k) + " outside [1, " +
                                  std::to_string(n) + "]");
    }
    const double p = s.probs.at(s.label);
    int rank = 0;
    for (int c = 0; c < n; ++c) {
      if (s.probs[c] > p || (s.probs[c] == p && c < s.label)) ++rank;
    }
    correct += rank < k;
  }
  return static_cast<double>(correct) / scores.size();
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired_t_test: samples of length " + std::to_string(a.size()) +
                                " and " + std::to_string(b.size()));
  }
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  if (std::all_of(d.begin(), d.end(), [&](double x) { return x == d[0]; })) {
    throw DegenerateInputError("paired_t_test: differences have zero variance");
  }
  double mean = 0;
  for (double x : d) mean += x;
  mean /= n;
  double ss = 0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1));
  TTestResult r;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.df = static_cast<int>(n - 1);
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

double student_t_two_sided_p(double t, int df) {
  if (df < 1) throw std::invalid_argument("student_t_two_sided_p: df must be >= 1");
  if (std::isnan(t)) throw std::invalid_argument("student_t_two_sided_p: t is NaN");
  const double x = std::abs(t);
  if (std::isinf(x)) return std::numeric_limits<double>::min();
  constexpr double kTol = 1e-10;
  double p;
  if (x <= 1.0) {
    const double central =
        AdaptiveSimpson([df](double u) { return StudentDensity(u, df); }, 0.0, x, kTol / 4);
    p = 1.0 - 2.0 * central;
  } else {
    // Tail integral over u = x / s, s in (0, 1]. Near s = 0 the integrand
    // behaves like s^(df - 1), so only df = 1 has a nonzero limit there.
    const double tail_at_zero = df == 1 ? 1.0 / (std::numbers::pi * x) : 0.0;
    auto f = [df, x, tail_at_zero](double s) {
      if (s == 0.0) return tail_at_zero;
      return StudentDensity(x / s, df) * x / (s * s);
    };
    p = 2.0 * AdaptiveSimpson(f, 0.0, 1.0, kTol / 4);
  }
  return std::clamp(p, std::numeric_limits<double>::min(), 1.0);
}

const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"Baseline frames", 52.50, 20.00, 40.00},
      {"DomainNet frames", 66.25, 62.50, 42.50},
      {"DomainNet frames+flows", 75.00, 73.75, 38.75},
      {"Humans", 98.43, 93.93, 76.29},
  };
  return rows;
}

EvalReport build_report(const std::vector<ReportModel>& models, const train::StimulusSet& data,
                        const ReportOptions& options,
                        const std::vector<ParticipantScores>& humans) {
  const int k = data.num_classes();
  EvalReport report;
  report.split = synth::split_name(options.split);
  report.foil_seed = options.foil_seed;
  report.category_subset = options.category_subset;
  if (report.category_subset.empty()) {
    for (int c = 0; c < k; ++c) report.category_subset.push_back(c);
  }
  CheckSubset(report.category_subset, k);
  report.choices_per_trial =
      std::min(options.choices_per_trial, static_cast<int>(report.category_subset.size()));
  report.reference = reference_rows();

  std::vector<int> clips;
  for (int i : data.in_split(options.split)) {
    const train::ClipVersions& cv = data.clips()[i];
    for (Version v : stim::kAllVersions) {
      if (cv.get(v).clip.num_frames() < 1) {
        throw std::invalid_argument("build_report: clip " + cv.record.id + " lacks version " +
                                    stim::version_name(v));
      }
    }
    const auto& subset = report.category_subset;
    if (std::find(subset.begin(), subset.end(), cv.record.action_class) != subset.end()) {
      clips.push_back(i);
    }
  }

  for (const ReportModel& rm : models) {
    if (rm.model == nullptr) throw std::invalid_argument("build_report: null model " + rm.name);
    ModelEval me;
    me.name = rm.name;
    me.spec = rm.model->spec();
    me.seed = rm.seed;
    for (Version v : stim::kAllVersions) {
      const std::vector<ClipScore> scores = score_clips(*rm.model, data, clips, v);
      HumanAlignedResult h = human_aligned_accuracy(scores, report.category_subset,
                                                    report.choices_per_trial, options.foil_seed);
      VersionScores& s = me.scores[static_cast<int>(v)];
      s.human_aligned = h.accuracy;
      s.top1 = topk_accuracy(scores, 1);
      s.top5 = topk_accuracy(scores, std::min(5, k));
      me.choices[static_cast<int>(v)] = std::move(h.records);
    }
    report.models.push_back(std::move(me));
  }

  // Flags compare per-name means over seeds.
  std::vector<std::string> names;
  std::map<std::string, std::array<double, 3>> mean;
  std::map<std::string, const ModelEval*> first;
  std::map<std::string, int> count;
  for (const ModelEval& me : report.models) {
    if (!first.count(me.name)) {
      names.push_back(me.name);
      first[me.name] = &me;
      mean[me.name] = {0, 0, 0};
    }
    for (int v = 0; v < 3; ++v) mean[me.name][v] += me.scores[v].human_aligned;
    ++count[me.name];
  }
  for (const std::string& n : names) {
    for (double& m : mean[n]) m /= count[n];
  }
  const int kO = static_cast<int>(Version::kOriginal);
  const int kB = static_cast<int>(Version::kBodyOnly);
  const int kG = static_cast<int>(Version::kBackgroundOnly);
  auto is = [&](const std::string& n, nets::Topology t) { return first[n]->spec.topology == t; };
  for (const std::string& b : names) {
    if (is(b, nets::Topology::kBaseline)) {
      report.flags.emplace_back(b + " bg > " + b + " body", mean[b][kG] > mean[b][kB]);
    }
  }
  for (const std::string& d : names) {
    if (!is(d, nets::Topology::kDomainNet)) continue;
    report.flags.emplace_back(d + " body > " + d + " bg", mean[d][kB] > mean[d][kG]);
    // Compare against the baseline with the same input, else the first one.
    const std::string* base = nullptr;
    for (const std::string& b : names) {
      if (is(b, nets::Topology::kBaseline) &&
          first[b]->spec.input_mode == first[d]->spec.input_mode) {
        base = &b;
        break;
      }
    }
    for (const std::string& b : names) {
      if (base == nullptr && is(b, nets::Topology::kBaseline)) base = &b;
    }
    if (base == nullptr) continue;
    report.flags.emplace_back(d + " body > " + *base + " body", mean[d][kB] > mean[*base][kB]);
    report.flags.emplace_back(d + " orig >= " + *base + " orig", mean[d][kO] >= mean[*base][kO]);
  }

  if (!humans.empty()) {
    HumanSummary hs;
    hs.participants = static_cast<int>(humans.size());
    std::vector<double> body, bg;
    for (const ParticipantScores& p : humans) {
      for (int v = 0; v < 3; ++v) hs.mean[v] += p[v] / humans.size();
      body.push_back(p[kB]);
      bg.push_back(p[kG]);
    }
    if (body.size() >= 2) {
      try {
        hs.body_vs_bg = paired_t_test(body, bg);
      } catch (const DegenerateInputError&) {
      }
    }
    report.humans = hs;
  }
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["split"] = split;
  j["category_subset"] = category_subset;
  j["choices_per_trial"] = choices_per_trial;
  j["foil_seed"] = foil_seed;
  j["models"] = nlohmann::json::array();
  for (const ModelEval& me : models) {
    nlohmann::json m = {{"name", me.name}, {"spec", me.spec.to_json()}, {"seed", me.seed}};
    for (Version v : stim::kAllVersions) {
      const int i = static_cast<int>(v);
      nlohmann::json choices = nlohmann::json::array();
      for (const ChoiceRecord& r : me.choices[i]) choices.push_back(r.to_json());
      m["versions"][stim::version_name(v)] = {{"human_aligned", me.scores[i].human_aligned},
                                              {"top1", me.scores[i].top1},
                                              {"top5", me.scores[i].top5},
                                              {"choices", choices}};
    }
    j["models"].push_back(m);
  }
  j["reference_percent"] = nlohmann::json::array();
  for (const ReferenceRow& r : reference) {
    j["reference_percent"].push_back(
        {{"name", r.name}, {"orig", r.orig}, {"body", r.body}, {"bg", r.bg}});
  }
  j["flags"] = nlohmann::json::object();
  for (const auto& [name, value] : flags) j["flags"][name] = value;
  if (humans) {
    nlohmann::json h = {{"participants", humans->participants}};
    for (Version v : stim::kAllVersions) {
      h["mean"][stim::version_name(v)] = humans->mean[static_cast<int>(v)];
    }
    if (humans->body_vs_bg) {
      h["body_vs_bg"] = {{"t", humans->body_vs_bg->t},
                         {"df", humans->body_vs_bg->df},
                         {"p", humans->body_vs_bg->p}};
    }
    j["humans"] = h;
  }
  return j;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  char line[256];
  auto table = [&](const char* title, double VersionScores::*field) {
    out << title << "\n";
    std::snprintf(line, sizeof(line), "%-28s %6s %6s %6s %6s\n", "model", "seed", "orig", "body",
                  "bg");
    out << line;
    for (const ModelEval& me : models) {
      std::snprintf(line, sizeof(line), "%-28s %6llu %s %s %s\n", me.name.c_str(),
                    static_cast<unsigned long long>(me.seed),
                    Percent(me.scores[0].*field).c_str(), Percent(me.scores[1].*field).c_str(),
                    Percent(me.scores[2].*field).c_str());
      out << line;
    }
    out << "\n";
  };
  out << "split " << split << ", " << choices_per_trial << " choices per trial, foil seed "
      << foil_seed << "\n\n";
  table("human-aligned accuracy (%)", &VersionScores::human_aligned);
  table("top-1 accuracy (%)", &VersionScores::top1);
  table("top-5 accuracy (%)", &VersionScores::top5);

  out << "published reference values (%), not targets\n";
  for (const ReferenceRow& r : reference) {
    std::snprintf(line, sizeof(line), "%-28s %6s %6.2f %6.2f %6.2f\n", r.name.c_str(), "-", r.orig,
                  r.body, r.bg);
    out << line;
  }
  out << "\n";
  if (humans) {
    std::snprintf(line, sizeof(line), "%-28s %6d %s %s %s\n", "participants (mean)",
                  humans->participants, Percent(humans->mean[0]).c_str(),
                  Percent(humans->mean[1]).c_str(), Percent(humans->mean[2]).c_str());
    out << line;
    if (humans->body_vs_bg) {
      std::snprintf(line, sizeof(line), "body vs bg: t(%d) = %.2f, p = %.3g\n",
                    humans->body_vs_bg->df, humans->body_vs_bg->t, humans->body_vs_bg->p);
      out << line;
    }
    out << "\n";
  }
  for (const auto& [name, value] : flags) {
    out << (value ? "yes " : "no  ") << name << "\n";
  }
  return out.str();
}

std::string EvalReport::to_plot_csv() const {
  std::ostringstream out;
  out << "model,seed,version,human_aligned,top1,top5\n";
  char line[256];
  for (const ModelEval& me : models) {
    for (Version v : stim::kAllVersions) {
      const VersionScores& s = me.scores[static_cast<int>(v)];
      std::snprintf(line, sizeof(line), "%s,%llu,%s,%.6f,%.6f,%.6f\n", me.name.c_str(),
                    static_cast<unsigned long long>(me.seed), stim::version_name(v),
                    s.human_aligned, s.top1, s.top5);
      out << line;
    }
  }
  return out.str();
}

}  // namespace bodyscene::eval
