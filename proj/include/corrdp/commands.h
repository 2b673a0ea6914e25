// Copyright 2026 The corrdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// The command-line verbs as library functions: each takes a JSON config and
// returns its report text, the process exit code and any sidecar files.

#ifndef CORRDP_COMMANDS_H_
#define CORRDP_COMMANDS_H_

#include <string>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "json.hpp"

namespace corrdp {

// Exit code for an EVR abort or a failed built-in assertion.
inline constexpr int kExitAbort = 2;
// Exit code for invalid configs and other errors.
inline constexpr int kExitError = 1;

struct CommandOutput {
  int exit_code = 0;
  // JSON or CSV, always newline-terminated.
  std::string text;
  // (suffix, content) pairs written next to the main output as
  // <out><suffix>.
  std::vector<std::pair<std::string, std::string>> sidecars;
};

// Accounting inputs shared by calibrate, verify and rmse-sweep. Keys:
// epsilon, delta (released), tau, batches_per_epoch, epochs, matrix
// (defaults to the identity of order b * E), samples, verify_samples, seed,
// adjacency.
absl::StatusOr<CommandOutput> CmdCalibrate(const nlohmann::json& config);
// Same keys plus sigma. Gates max(add, remove) at delta / tau.
absl::StatusOr<CommandOutput> CmdVerify(const nlohmann::json& config);
// epsilons (list) and matrices (list of {label, matrix}); emits CSV.
absl::StatusOr<CommandOutput> CmdRmseSweep(const nlohmann::json& config);
// An optimizer config; emits the final matrix, sigma, RMSE and trace.
absl::StatusOr<CommandOutput> CmdOptimize(const nlohmann::json& config);
// Optional sigmas and alphas grids.
absl::StatusOr<CommandOutput> CmdCounterexample(const nlohmann::json& config);
// training (a training config), matrix, accounting keys, repeats. Runs all
// three modes; per-mode traces of the first repeat go to sidecars.
absl::StatusOr<CommandOutput> CmdTrain(const nlohmann::json& config);

// Dispatches on the verb name used on the command line.
absl::StatusOr<CommandOutput> RunCommand(const std::string& name,
                                         const nlohmann::json& config);

const std::vector<std::string>& CommandNames();

}  // namespace corrdp

#endif  // CORRDP_COMMANDS_H_
