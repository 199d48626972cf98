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


#ifndef BODYSCENE_CLI_CLI_H_
#define BODYSCENE_CLI_CLI_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

// Command line front end. One subcommand per stage:
//
//   synth    --out DATA [--config F] [--seed N] [--rho R]
//   flow     --data DATA --out DIR             copy with estimated flows
//   version  --data DATA --out VDATA           orig/body/bg layout
//   train    --data VDATA --out RUN [--model M] [--mode M] [--seed N]
//   eval     --data VDATA --run RUN [--version V] [--out DIR]
//   report   --data VDATA --run RUN... --out DIR [--humans F] [--seed N]
//   serve    --data VDATA --out DIR [--seed N] [--host H] [--port P]
//
// --config names a study file whose "synth", "train", "report" and "serve"
// sections configure the matching subcommands; missing sections and keys
// keep their defaults. Every subcommand that writes files also writes
// <out>/provenance.json.
namespace bodyscene::cli {

inline constexpr const char* kToolVersion = "bodyscene 0.1.0";

// args excludes the program name. Returns 0 on success, 2 on a usage error
// (after printing usage), 1 on any other failure (after a one-line
// diagnostic on err).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// FNV-1a 64 of a file's bytes as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

// Provenance record: tool version, subcommand, the effective configuration,
// its hash, the seed and the hashes of the inputs. No timestamps, so equal
// runs give equal records.
nlohmann::json provenance(const std::string& command, const nlohmann::json& config,
                          std::uint64_t seed, const std::vector<std::filesystem::path>& inputs);

}  // namespace bodyscene::cli

#endif  // BODYSCENE_CLI_CLI_H_
