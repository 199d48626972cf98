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


#include "bodyscene/cli/cli.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "bodyscene/eval/evalstats.h"
#include "bodyscene/exp/expserver.h"
#include "bodyscene/nets/nets.h"
#include "bodyscene/stim/stimpipe.h"
#include "bodyscene/synth/dataset.h"
#include "bodyscene/tensor/checkpoint.h"
#include "bodyscene/train/trainloop.h"

namespace bodyscene::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// Everything a subcommand may be given. Which fields apply depends on the
// subcommand.
struct Args {
  std::string config;
  std::string out;
  std::string data;
  std::vector<std::string> runs;
  std::string humans;
  std::uint64_t seed = 0;
  double rho = 0;
  std::string model;
  std::string mode;
  std::string version;
  std::string host;
  int port = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* rho_opt = nullptr;
  CLI::Option* host_opt = nullptr;
  CLI::Option* port_opt = nullptr;

  bool has_seed() const { return seed_opt && seed_opt->count() > 0; }

  json section(const char* name) const {
    if (config.empty()) return json::object();
    const json j = read_json(config);
    return j.contains(name) ? j.at(name) : json::object();
  }
  std::vector<fs::path> config_inputs() const {
    return config.empty() ? std::vector<fs::path>{} : std::vector<fs::path>{config};
  }
};

std::vector<fs::path> versioned_manifests(const fs::path& root) {
  std::vector<fs::path> out;
  for (stim::Version v : stim::kAllVersions) {
    out.push_back(root / stim::version_name(v) / synth::kManifestFile);
  }
  return out;
}

int cmd_synth(const Args& a, std::ostream& out) {
  synth::SynthConfig c = synth::SynthConfig::from_json(a.section("synth"));
  if (a.has_seed()) c.seed = a.seed;
  if (a.rho_opt->count() > 0) c.rho = a.rho;
  c.validate();
  const synth::DatasetManifest m = synth::generate_dataset(c, a.out);
  write_json(fs::path(a.out) / "provenance.json",
             provenance("synth", c.to_json(), c.seed, a.config_inputs()));
  out << "synth: " << m.clips.size() << " clips, " << m.num_classes() << " classes -> " << a.out
      << "\n";
  return 0;
}

int cmd_flow(const Args& a, std::ostream& out) {
  synth::DatasetManifest m = synth::load_external(a.data);
  const synth::DatasetManifest source = m;
  for (synth::ClipRecord& r : m.clips) {
    synth::Clip clip = synth::load_clip(source, r);
    clip.flows.clear();
    for (int t = 0; t + 1 < clip.num_frames(); ++t) {
      clip.flows.push_back(stim::estimate_flow(clip.frames[t], clip.frames[t + 1]));
    }
    r.path = r.id;
    r.has_flows = true;
    synth::write_clip(fs::path(a.out) / r.path, clip);
  }
  synth::write_manifest(a.out, m);
  write_json(fs::path(a.out) / "provenance.json",
             provenance("flow", json::object(), 0, {fs::path(a.data) / synth::kManifestFile}));
  out << "flow: " << m.clips.size() << " clips -> " << a.out << "\n";
  return 0;
}

int cmd_version(const Args& a, std::ostream& out) {
  const synth::DatasetManifest m = synth::load_external(a.data);
  stim::write_versions(m, a.out);
  write_json(fs::path(a.out) / "provenance.json",
             provenance("version", {{"dilation", stim::kDilationFactor}}, 0,
                        {fs::path(a.data) / synth::kManifestFile}));
  out << "version: " << m.clips.size() << " clips x 3 versions -> " << a.out << "\n";
  return 0;
}

struct LoadedRun {
  train::TrainConfig config;
  nets::Model model;
  std::string name;
};

std::string model_name(const nets::ModelSpec& spec) {
  return std::string(nets::topology_name(spec.topology)) + "-" +
         nets::input_mode_name(spec.input_mode);
}

LoadedRun load_run(const fs::path& dir) {
  const json j = read_json(dir / "train.json");
  train::TrainConfig c = train::TrainConfig::from_json(j.at("config"));
  nets::Model m = nets::Model::load(dir / "model.ckpt", c.model);
  return {c, std::move(m), model_name(c.model)};
}

int cmd_train(const Args& a, std::ostream& out) {
  train::TrainConfig c = train::TrainConfig::from_json(a.section("train"));
  const train::StimulusSet data = train::StimulusSet::read_versioned(a.data);
  c.model.num_classes = data.num_classes();
  if (!a.model.empty()) c.model.topology = nets::parse_topology(a.model);
  if (!a.mode.empty()) c.model.input_mode = nets::parse_input_mode(a.mode);
  if (a.has_seed()) c.seed = a.seed;
  c.validate();

  const std::string name = model_name(c.model);
  const train::TrainResult r = train::train(c, data, [&](const train::EpochRecord& e) {
    char line[160];
    std::snprintf(line, sizeof(line), "%s seed %llu epoch %d loss %.4f train %.3f val %.3f\n",
                  name.c_str(), static_cast<unsigned long long>(c.seed), e.epoch, e.loss,
                  e.train_accuracy, e.val_accuracy);
    out << line << std::flush;
  });
  if (r.best_epoch < 0) throw std::runtime_error("no epoch ran; nothing to save");

  const fs::path dir = a.out;
  fs::create_directories(dir);
  r.best.save(dir / "model.ckpt");
  json history = json::array();
  for (const train::EpochRecord& e : r.history) history.push_back(e.to_json(false));
  write_json(dir / "train.json", {{"config", c.to_json()},
                                  {"name", name},
                                  {"best_epoch", r.best_epoch},
                                  {"best_val_accuracy", r.best_val_accuracy},
                                  {"history", history}});
  std::vector<fs::path> inputs = versioned_manifests(a.data);
  for (const fs::path& p : a.config_inputs()) inputs.push_back(p);
  write_json(dir / "provenance.json", provenance("train", c.to_json(), c.seed, inputs));
  out << name << ": best epoch " << r.best_epoch << " -> " << (dir / "model.ckpt").string()
      << "\n";
  return 0;
}

eval::ReportOptions report_options(const Args& a) {
  const json j = a.section("report");
  eval::ReportOptions o;
  try {
    if (j.contains("split")) o.split = synth::parse_split(j.at("split").get<std::string>());
    if (j.contains("category_subset")) j.at("category_subset").get_to(o.category_subset);
    if (j.contains("choices_per_trial")) j.at("choices_per_trial").get_to(o.choices_per_trial);
    if (j.contains("foil_seed")) j.at("foil_seed").get_to(o.foil_seed);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("report config: ") + e.what());
  }
  if (a.has_seed()) o.foil_seed = a.seed;
  return o;
}

json report_options_json(const eval::ReportOptions& o) {
  return {{"split", synth::split_name(o.split)},
          {"category_subset", o.category_subset},
          {"choices_per_trial", o.choices_per_trial},
          {"foil_seed", o.foil_seed}};
}

int cmd_eval(const Args& a, std::ostream& out) {
  if (a.runs.size() != 1) throw std::invalid_argument("eval takes exactly one --run");
  const LoadedRun run = load_run(a.runs[0]);
  const train::StimulusSet data = train::StimulusSet::read_versioned(a.data);
  const eval::ReportOptions o = report_options(a);
  const std::vector<int> clips = data.in_split(o.split);
  std::vector<int> subset = o.category_subset;
  if (subset.empty()) {
    for (int c = 0; c < data.num_classes(); ++c) subset.push_back(c);
  }
  const int choices = std::min<int>(o.choices_per_trial, static_cast<int>(subset.size()));

  std::vector<stim::Version> versions(std::begin(stim::kAllVersions),
                                      std::end(stim::kAllVersions));
  if (!a.version.empty()) versions = {stim::parse_version(a.version)};
  json results = json::object();
  for (stim::Version v : versions) {
    std::vector<eval::ClipScore> scores = eval::score_clips(run.model, data, clips, v);
    // The choice-restricted score only covers clips whose label is in subset.
    std::vector<eval::ClipScore> in_subset;
    for (const eval::ClipScore& s : scores) {
      if (std::count(subset.begin(), subset.end(), s.label)) in_subset.push_back(s);
    }
    const double top1 = eval::topk_accuracy(scores, 1);
    const double aligned =
        eval::human_aligned_accuracy(in_subset, subset, choices, o.foil_seed).accuracy;
    results[stim::version_name(v)] = {{"top1", top1}, {"human_aligned", aligned}};
    char line[160];
    std::snprintf(line, sizeof(line), "%s %s top1 %.4f %d-choice %.4f\n", run.name.c_str(),
                  stim::version_name(v), top1, choices, aligned);
    out << line;
  }
  if (!a.out.empty()) {
    json cfg = report_options_json(o);
    cfg["choices_per_trial"] = choices;
    write_json(fs::path(a.out) / "eval.json",
               {{"model", run.name}, {"seed", run.config.seed}, {"options", cfg},
                {"results", results}});
    std::vector<fs::path> inputs = versioned_manifests(a.data);
    inputs.push_back(fs::path(a.runs[0]) / "model.ckpt");
    write_json(fs::path(a.out) / "provenance.json",
               provenance("eval", cfg, o.foil_seed, inputs));
  }
  return 0;
}

// Complete sessions only: a participant counts once every block holds the
// same, nonzero number of responses.
std::vector<eval::ParticipantScores> human_scores(const fs::path& store) {
  std::map<std::string, std::array<std::array<int, 2>, exp::kNumBlocks>> tally;
  for (const exp::TrialRecord& r : exp::ResponseStore::read(store)) {
    auto& [correct, total] = tally[r.participant][r.block];
    correct += r.correct ? 1 : 0;
    ++total;
  }
  std::vector<eval::ParticipantScores> out;
  for (const auto& [pid, blocks] : tally) {
    const int n = blocks[0][1];
    if (n == 0 || blocks[1][1] != n || blocks[2][1] != n) continue;
    eval::ParticipantScores s{};
    for (int b = 0; b < exp::kNumBlocks; ++b) {
      s[static_cast<int>(exp::kBlockOrder[b])] = static_cast<double>(blocks[b][0]) / n;
    }
    out.push_back(s);
  }
  return out;
}

int cmd_report(const Args& a, std::ostream& out) {
  if (a.runs.empty()) throw std::invalid_argument("report needs at least one --run");
  const train::StimulusSet data = train::StimulusSet::read_versioned(a.data);
  const eval::ReportOptions o = report_options(a);
  std::vector<LoadedRun> runs;
  for (const std::string& dir : a.runs) runs.push_back(load_run(dir));
  std::vector<eval::ReportModel> models;
  for (const LoadedRun& r : runs) models.push_back({r.name, &r.model, r.config.seed});
  const std::vector<eval::ParticipantScores> humans =
      a.humans.empty() ? std::vector<eval::ParticipantScores>{} : human_scores(a.humans);
  const eval::EvalReport report = eval::build_report(models, data, o, humans);

  const fs::path dir = a.out;
  write_text(dir / "report.txt", report.to_text());
  write_json(dir / "report.json", report.to_json());
  write_text(dir / "plot.csv", report.to_plot_csv());
  std::vector<fs::path> inputs = versioned_manifests(a.data);
  for (const std::string& r : a.runs) {
    inputs.push_back(fs::path(r) / "train.json");
    inputs.push_back(fs::path(r) / "model.ckpt");
  }
  if (!a.humans.empty()) inputs.push_back(a.humans);
  for (const fs::path& p : a.config_inputs()) inputs.push_back(p);
  write_json(dir / "provenance.json",
             provenance("report", report_options_json(o), o.foil_seed, inputs));
  out << report.to_text();
  return 0;
}

int cmd_serve(const Args& a, std::ostream& out) {
  const json j = a.section("serve");
  exp::ExperimentConfig c;
  std::string host = "127.0.0.1";
  int port = 8080;
  try {
    if (j.contains("n_categories")) j.at("n_categories").get_to(c.n_categories);
    if (j.contains("categories")) j.at("categories").get_to(c.categories);
    if (j.contains("choices")) j.at("choices").get_to(c.choices);
    if (j.contains("frame_rate")) j.at("frame_rate").get_to(c.frame_rate);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (j.contains("host")) j.at("host").get_to(host);
    if (j.contains("port")) j.at("port").get_to(port);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("serve config: ") + e.what());
  }
  if (a.has_seed()) c.seed = a.seed;
  if (a.host_opt->count() > 0) host = a.host;
  if (a.port_opt->count() > 0) port = a.port;

  const fs::path root = a.data;
  synth::DatasetManifest m = synth::load_external(root / stim::version_name(stim::Version::kOriginal));
  const fs::path dir = a.out;
  fs::create_directories(dir);
  exp::Experiment experiment(std::move(m), c, dir / "responses.jsonl");
  const json cfg = {{"n_categories", experiment.config().n_categories},
                    {"categories", c.categories},
                    {"choices", c.choices},
                    {"frame_rate", c.frame_rate}};
  std::vector<fs::path> inputs = versioned_manifests(root);
  for (const fs::path& p : a.config_inputs()) inputs.push_back(p);
  write_json(dir / "provenance.json", provenance("serve", cfg, c.seed, inputs));

  exp::ExperimentServer server(experiment, root);
  const int bound = server.bind(host, port);
  out << "serving " << experiment.config().n_categories << " categories on http://" << host
      << ":" << bound << "\n"
      << std::flush;
  server.serve();
  return 0;
}

}  // namespace

std::string file_hash(const fs::path& path) { return hex64(fnv1a64(read_text(path))); }

json provenance(const std::string& command, const json& config, std::uint64_t seed,
                const std::vector<fs::path>& inputs) {
  json in = json::array();
  for (const fs::path& p : inputs) {
    in.push_back({{"path", p.generic_string()}, {"fnv1a64", file_hash(p)}});
  }
  return {{"tool", kToolVersion},
          {"command", command},
          {"config", config},
          {"config_hash", hex64(fnv1a64(config.dump()))},
          {"seed", seed},
          {"inputs", in}};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Body/background action-recognition study", "bodyscene"};
  app.require_subcommand(1);
  app.set_version_flag("--tool-version", kToolVersion);
  Args a;

  auto add_common = [&a](CLI::App* sub) {
    sub->add_option("--config", a.config, "Study configuration JSON")->check(CLI::ExistingFile);
  };
  auto add_seed = [&a](CLI::App* sub, const char* what) {
    a.seed_opt = sub->add_option("--seed", a.seed, what);
  };
  auto add_data = [&a](CLI::App* sub, const char* what) {
    sub->add_option("--data", a.data, what)->required()->check(CLI::ExistingDirectory);
  };

  CLI::App* synth = app.add_subcommand("synth", "Render a synthetic dataset");
  add_common(synth);
  synth->add_option("--out", a.out, "Dataset root")->required();
  add_seed(synth, "Generator seed");
  a.rho_opt = synth->add_option("--rho", a.rho, "Background/action co-occurrence");

  CLI::App* flow = app.add_subcommand("flow", "Copy a dataset with estimated optic flow");
  add_data(flow, "Source dataset root");
  flow->add_option("--out", a.out, "Output root")->required();

  CLI::App* version = app.add_subcommand("version", "Write orig/body/bg stimulus versions");
  add_data(version, "Source dataset root");
  version->add_option("--out", a.out, "Versioned output root")->required();

  CLI::App* train = app.add_subcommand("train", "Train one model");
  add_common(train);
  add_data(train, "Versioned dataset root");
  train->add_option("--out", a.out, "Run directory")->required();
  train->add_option("--model", a.model, "Topology")
      ->check(CLI::IsMember({"baseline", "domainnet"}));
  train->add_option("--mode", a.mode, "Input mode")
      ->check(CLI::IsMember({"frames", "frames+flows"}));
  add_seed(train, "Training seed");

  CLI::App* evalc = app.add_subcommand("eval", "Evaluate one trained model");
  add_common(evalc);
  add_data(evalc, "Versioned dataset root");
  evalc->add_option("--run", a.runs, "Run directory")->required()->check(CLI::ExistingDirectory);
  evalc->add_option("--version", a.version, "Only this stimulus version")
      ->check(CLI::IsMember({"orig", "body", "bg"}));
  evalc->add_option("--out", a.out, "Write eval.json here");
  add_seed(evalc, "Foil seed");

  CLI::App* report = app.add_subcommand("report", "Compare trained models");
  add_common(report);
  add_data(report, "Versioned dataset root");
  report->add_option("--run", a.runs, "Run directory (repeatable)")
      ->required()
      ->check(CLI::ExistingDirectory);
  report->add_option("--out", a.out, "Report directory")->required();
  report->add_option("--humans", a.humans, "Response store from serve")
      ->check(CLI::ExistingFile);
  add_seed(report, "Foil seed");

  CLI::App* serve = app.add_subcommand("serve", "Run the behavioral experiment server");
  add_common(serve);
  add_data(serve, "Versioned dataset root");
  serve->add_option("--out", a.out, "Directory for the response store")->required();
  add_seed(serve, "Session seed");
  a.host_opt = serve->add_option("--host", a.host, "Bind address");
  a.port_opt = serve->add_option("--port", a.port, "Port (0 picks one)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "bodyscene: " << e.what() << "\n";
    err << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 2;
  }

  try {
    // add_seed ran once per subcommand; point at the parsed one.
    CLI::App* sub = app.get_subcommands().front();
    a.seed_opt = sub->get_option_no_throw("--seed");
    if (sub == synth) return cmd_synth(a, out);
    if (sub == flow) return cmd_flow(a, out);
    if (sub == version) return cmd_version(a, out);
    if (sub == train) return cmd_train(a, out);
    if (sub == evalc) return cmd_eval(a, out);
    if (sub == report) return cmd_report(a, out);
    return cmd_serve(a, out);
  } catch (const std::exception& e) {
    err << "bodyscene: error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace bodyscene::cli
