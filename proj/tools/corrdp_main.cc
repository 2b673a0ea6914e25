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

// corrdp {calibrate|verify|rmse-sweep|optimize|counterexample|train}
//     [--config <path>] [--threads N] [--out <path>]

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "corrdp/commands.h"
#include "corrdp/parallel.h"
#include "json.hpp"

namespace {

bool WriteFile(const std::string& path, const std::string& content) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  file << content;
  return static_cast<bool>(file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo privacy accounting for correlated-noise training "
               "with balls-in-bins batching"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  int threads = 0;
  for (const std::string& name : corrdp::CommandNames()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--threads", threads,
                    "Worker thread cap; results do not depend on it")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--out", out_path,
                    "Output path; sidecar files are written next to it");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  nlohmann::json config = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream file(config_path);
    try {
      config = nlohmann::json::parse(file);
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "error: cannot parse " << config_path << ": " << e.what()
                << "\n";
      return corrdp::kExitError;
    }
  }
  corrdp::SetWorkerCount(threads);

  absl::StatusOr<corrdp::CommandOutput> output =
      corrdp::RunCommand(command, config);
  if (!output.ok()) {
    std::cerr << "error: " << output.status() << "\n";
    return corrdp::kExitError;
  }
  if (out_path.empty()) {
    std::cout << output->text;
    if (!output->sidecars.empty()) {
      std::cerr << "note: " << output->sidecars.size()
                << " sidecar file(s) need --out to be written\n";
    }
  } else {
    if (!WriteFile(out_path, output->text)) {
      std::cerr << "error: cannot write " << out_path << "\n";
      return corrdp::kExitError;
    }
    for (const auto& [suffix, content] : output->sidecars) {
      if (!WriteFile(out_path + suffix, content)) {
        std::cerr << "error: cannot write " << out_path << suffix << "\n";
        return corrdp::kExitError;
      }
    }
  }
  return output->exit_code;
}
