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

#include "corrdp/commands.h"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "corrdp/divergence_oracle.h"
#include "corrdp/gaussian_mechanism.h"
#include "corrdp/harness.h"
#include "corrdp/matrix_core.h"
#include "corrdp/matrix_json.h"
#include "corrdp/monte_carlo_accountant.h"
#include "corrdp/parallel.h"
#include "corrdp/strategy_optimizer.h"

namespace corrdp {
namespace {

using Json = nlohmann::json;

// Stream index of the verification draws under the run seed, kept apart from
// the calibration draws.
constexpr uint64_t kVerifyStream = 1;

struct AccountingInputs {
  double epsilon = 1.0;
  double delta = 1e-5;
  double tau = 1.25;
  ParticipationSchema schema = *ParticipationSchema::Create(1, 1);
  StrategyMatrix strategy = StrategyMatrix::Identity(1);
  int64_t samples = int64_t{1} << 20;
  int64_t verify_samples = 1000000;
  uint64_t seed = 0;
  Adjacency adjacency = Adjacency::kBoth;

  double delta_prime() const { return delta / tau; }
};

std::string WithNewline(std::string text) {
  if (text.empty() || text.back() != '\n') text.push_back('\n');
  return text;
}

std::string DumpJson(const Json& json) { return WithNewline(json.dump(2)); }

absl::StatusOr<AccountingInputs> ParseAccounting(const Json& config) {
  if (!config.is_object()) {
    return absl::InvalidArgumentError("config must be a JSON object");
  }
  AccountingInputs in;
  try {
    in.epsilon = config.value("epsilon", in.epsilon);
    in.delta = config.value("delta", in.delta);
    in.tau = config.value("tau", in.tau);
    in.samples = config.value("samples", in.samples);
    in.verify_samples = config.value("verify_samples", in.verify_samples);
    in.seed = config.value("seed", in.seed);
    const int b = config.value("batches_per_epoch", 1);
    const int epochs = config.value("epochs", 1);
    absl::StatusOr<ParticipationSchema> schema =
        ParticipationSchema::Create(b, epochs);
    if (!schema.ok()) return schema.status();
    in.schema = *schema;
    if (config.contains("matrix")) {
      absl::StatusOr<StrategyMatrix> strategy =
          StrategyFromJson(config.at("matrix"));
      if (!strategy.ok()) return strategy.status();
      in.strategy = *std::move(strategy);
    } else {
      in.strategy = StrategyMatrix::Identity(in.schema.iterations());
    }
    if (config.contains("adjacency")) {
      absl::StatusOr<Adjacency> adjacency =
          ParseAdjacency(config.at("adjacency").get<std::string>());
      if (!adjacency.ok()) return adjacency.status();
      in.adjacency = *adjacency;
    }
  } catch (const Json::exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("bad config: ", e.what()));
  }
  if (in.strategy.order() != in.schema.iterations()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "matrix order ", in.strategy.order(), " does not match b * E = ",
        in.schema.iterations()));
  }
  if (!(in.tau > 1.0)) return absl::InvalidArgumentError("tau must be > 1");
  if (in.samples < 1 || in.verify_samples < 1) {
    return absl::InvalidArgumentError("sample counts must be positive");
  }
  if (absl::Status s = PrivacyParams{in.epsilon, in.delta}.Validate(); !s.ok()) {
    return s;
  }
  return in;
}

const EstimatorResult& Pick(const AdjacencyEstimates& estimates,
                            Adjacency adjacency) {
  switch (adjacency) {
    case Adjacency::kAdd:
      return estimates.add;
    case Adjacency::kRemove:
      return estimates.remove;
    case Adjacency::kBoth:
      break;
  }
  return estimates.both;
}

struct Verification {
  AdjacencyEstimates estimates;
  EvrDecision decision = EvrDecision::kAbort;
  double failure_prob = 1.0;
  double failure_prob_per_adjacency = 1.0;
};

absl::StatusOr<Verification> VerifyAt(const AccountingInputs& in,
                                      double sigma) {
  absl::StatusOr<ModeSet> modes = ModeVectors(in.strategy, in.schema);
  if (!modes.ok()) return modes.status();
  absl::StatusOr<AdjacencyEstimates> estimates = EstimateDeltaStreaming(
      in.epsilon, sigma, *modes, in.verify_samples,
      StreamSeed(in.seed, kVerifyStream));
  if (!estimates.ok()) return estimates.status();
  absl::StatusOr<double> per = BernsteinFailureProb(
      static_cast<double>(in.verify_samples), in.tau, in.delta_prime());
  if (!per.ok()) return per.status();
  Verification v;
  v.estimates = *estimates;
  v.decision = EvrGate({in.epsilon, in.delta_prime()},
                       Pick(*estimates, in.adjacency).delta_hat);
  v.failure_prob_per_adjacency = *per;
  v.failure_prob =
      std::min(1.0, *per * (in.adjacency == Adjacency::kBoth ? 2.0 : 1.0));
  return v;
}

Json BaseReport(const AccountingInputs& in, double sigma,
                const Verification& v) {
  const EstimatorResult& chosen = Pick(v.estimates, in.adjacency);
  return {{"epsilon", in.epsilon},
          {"delta", in.delta},
          {"delta_prime", in.delta_prime()},
          {"sigma_star", sigma},
          {"sample_count", in.verify_samples},
          {"std_error", chosen.std_error},
          {"bernstein_failure_prob", v.failure_prob},
          {"adjacency", AdjacencyName(in.adjacency)},
          {"seed", in.seed},
          {"matrix_fingerprint", MatrixFingerprint(in.strategy)},
          {"tau", in.tau},
          {"batches_per_epoch", in.schema.batches_per_epoch()},
          {"epochs", in.schema.epochs()},
          {"family", FamilyName(in.strategy.family())},
          {"delta_hat", chosen.delta_hat},
          {"delta_hat_add", v.estimates.add.delta_hat},
          {"delta_hat_remove", v.estimates.remove.delta_hat},
          {"bernstein_failure_prob_per_adjacency",
           v.failure_prob_per_adjacency},
          {"decision",
           v.decision == EvrDecision::kProceed ? "proceed" : "abort"}};
}

CalibrationOptions OptionsFor(const AccountingInputs& in) {
  CalibrationOptions options;
  options.tau = in.tau;
  options.adjacency = in.adjacency;
  return options;
}

std::string FormatDouble(double v) { return absl::StrFormat("%.17g", v); }

}  // namespace

absl::StatusOr<CommandOutput> CmdCalibrate(const Json& config) {
  absl::StatusOr<AccountingInputs> in = ParseAccounting(config);
  if (!in.ok()) return in.status();
  absl::StatusOr<CalibrationResult> calibration =
      CalibrateSigma(in->epsilon, in->delta, in->strategy, in->schema,
                     in->samples, in->seed, OptionsFor(*in));
  if (!calibration.ok()) return calibration.status();
  absl::StatusOr<Verification> v = VerifyAt(*in, calibration->sigma);
  if (!v.ok()) return v.status();
  absl::StatusOr<double> unamplified = CalibrateSigmaUnamplified(
      in->epsilon, in->delta_prime(), in->strategy, in->schema);
  if (!unamplified.ok()) return unamplified.status();

  Json report = BaseReport(*in, calibration->sigma, *v);
  report["calibration_sample_count"] = in->samples;
  report["calibration_delta_hat"] = calibration->estimate.delta_hat;
  report["calibration_iterations"] = calibration->iterations;
  report["bracket_expansions"] = calibration->bracket_expansions;
  report["sigma_unamplified"] = *unamplified;
  CommandOutput out;
  out.text = DumpJson(report);
  out.exit_code = v->decision == EvrDecision::kProceed ? 0 : kExitAbort;
  return out;
}

absl::StatusOr<CommandOutput> CmdVerify(const Json& config) {
  absl::StatusOr<AccountingInputs> in = ParseAccounting(config);
  if (!in.ok()) return in.status();
  if (!config.contains("sigma") || !config.at("sigma").is_number()) {
    return absl::InvalidArgumentError("verify needs a numeric sigma");
  }
  const double sigma = config.at("sigma").get<double>();
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    return absl::InvalidArgumentError("sigma must be positive");
  }
  absl::StatusOr<Verification> v = VerifyAt(*in, sigma);
  if (!v.ok()) return v.status();
  CommandOutput out;
  out.text = DumpJson(BaseReport(*in, sigma, *v));
  out.exit_code = v->decision == EvrDecision::kProceed ? 0 : kExitAbort;
  return out;
}

absl::StatusOr<CommandOutput> CmdRmseSweep(const Json& config) {
  absl::StatusOr<AccountingInputs> in = ParseAccounting(config);
  if (!in.ok()) return in.status();
  std::vector<double> epsilons = {in->epsilon};
  std::vector<std::pair<std::string, StrategyMatrix>> matrices;
  try {
    if (config.contains("epsilons")) {
      epsilons = config.at("epsilons").get<std::vector<double>>();
    }
    if (config.contains("matrices")) {
      for (const Json& entry : config.at("matrices")) {
        absl::StatusOr<StrategyMatrix> strategy =
            StrategyFromJson(entry.at("matrix"));
        if (!strategy.ok()) return strategy.status();
        const std::string label =
            entry.value("label", FamilyName(strategy->family()));
        matrices.emplace_back(label, *std::move(strategy));
      }
    } else {
      matrices.emplace_back(FamilyName(in->strategy.family()), in->strategy);
    }
  } catch (const Json::exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("bad config: ", e.what()));
  }
  if (epsilons.empty() || matrices.empty()) {
    return absl::InvalidArgumentError("need at least one epsilon and matrix");
  }

  std::string csv = "eps,family,rmse_unamp,rmse_amp,pct_improvement\n";
  for (double epsilon : epsilons) {
    for (const auto& [label, strategy] : matrices) {
      if (strategy.order() != in->schema.iterations()) {
        return absl::InvalidArgumentError(
            absl::StrCat("matrix '", label, "' has the wrong order"));
      }
      absl::StatusOr<double> sigma_unamp = CalibrateSigmaUnamplified(
          epsilon, in->delta_prime(), strategy, in->schema);
      if (!sigma_unamp.ok()) return sigma_unamp.status();
      absl::StatusOr<CalibrationResult> amplified =
          CalibrateSigma(epsilon, in->delta, strategy, in->schema,
                         in->samples, in->seed, OptionsFor(*in));
      if (!amplified.ok()) return amplified.status();
      absl::StatusOr<double> rmse_unamp = Rmse(strategy, *sigma_unamp);
      if (!rmse_unamp.ok()) return rmse_unamp.status();
      absl::StatusOr<double> rmse_amp = Rmse(strategy, amplified->sigma);
      if (!rmse_amp.ok()) return rmse_amp.status();
      absl::StrAppend(&csv, FormatDouble(epsilon), ",", label, ",",
                      FormatDouble(*rmse_unamp), ",", FormatDouble(*rmse_amp),
                      ",",
                      FormatDouble(100.0 * (1.0 - *rmse_amp / *rmse_unamp)),
                      "\n");
    }
  }
  CommandOutput out;
  out.text = csv;
  return out;
}

absl::StatusOr<CommandOutput> CmdOptimize(const Json& config) {
  absl::StatusOr<OptimizerConfig> optimizer_config =
      OptimizerConfigFromJson(config);
  if (!optimizer_config.ok()) return optimizer_config.status();
  absl::StatusOr<OptimizationResult> result = Optimize(*optimizer_config);
  if (!result.ok()) return result.status();
  Json report = {
      {"config", OptimizerConfigToJson(*optimizer_config)},
      {"params", result->params},
      {"num_params", result->params.size()},
      {"matrix", StrategyToJson(result->strategy)},
      {"matrix_fingerprint", MatrixFingerprint(result->strategy)},
      {"sigma", result->sigma},
      {"rmse", result->rmse},
      {"final_calibration",
       {{"sample_count", result->final_calibration.estimate.sample_count},
        {"delta_hat", result->final_calibration.estimate.delta_hat},
        {"std_error", result->final_calibration.estimate.std_error},
        {"delta_prime", result->final_calibration.delta_prime}}},
      {"trace", TraceToJson(result->trace)}};
  CommandOutput out;
  out.text = DumpJson(report);
  return out;
}

absl::StatusOr<CommandOutput> CmdCounterexample(const Json& config) {
  std::vector<double> sigmas = {0.5, 1.0, 2.0};
  std::vector<double> alphas = {std::exp(0.25), std::exp(0.5), std::exp(1.0)};
  try {
    if (config.is_object()) {
      sigmas = config.value("sigmas", sigmas);
      alphas = config.value("alphas", alphas);
    }
  } catch (const Json::exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("bad config: ", e.what()));
  }
  Json rows = Json::array();
  bool all_strict = true;
  for (double sigma : sigmas) {
    for (double alpha : alphas) {
      absl::StatusOr<std::pair<double, double>> values =
          AdaptivityCounterexampleCheck(sigma, alpha);
      if (!values.ok()) return values.status();
      // At alpha = 0 both sides integrate P and tie, so it is reported but
      // not asserted.
      const bool asserted = alpha > 0.0;
      const bool strict = values->first > values->second;
      if (asserted && !strict) all_strict = false;
      rows.push_back({{"sigma", sigma},
                      {"alpha", alpha},
                      {"h_opposite_signs", values->first},
                      {"h_same_signs", values->second},
                      {"strict", strict},
                      {"asserted", asserted}});
    }
  }
  CommandOutput out;
  out.text = DumpJson({{"points", rows}, {"all_strict", all_strict}});
  out.exit_code = all_strict ? 0 : kExitAbort;
  return out;
}

absl::StatusOr<CommandOutput> CmdTrain(const Json& config) {
  absl::StatusOr<AccountingInputs> in = ParseAccounting(config);
  if (!in.ok()) return in.status();
  int repeats = 1;
  TrainingConfig base;
  try {
    repeats = config.value("repeats", repeats);
    if (config.contains("training")) {
      absl::StatusOr<TrainingConfig> parsed =
          TrainingConfigFromJson(config.at("training"));
      if (!parsed.ok()) return parsed.status();
      base = *parsed;
    }
  } catch (const Json::exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("bad config: ", e.what()));
  }
  if (repeats < 1) return absl::InvalidArgumentError("repeats must be >= 1");
  base.batches_per_epoch = in->schema.batches_per_epoch();
  base.epochs = in->schema.epochs();

  absl::StatusOr<CalibrationResult> amplified =
      CalibrateSigma(in->epsilon, in->delta, in->strategy, in->schema,
                     in->samples, in->seed, OptionsFor(*in));
  if (!amplified.ok()) return amplified.status();
  absl::StatusOr<double> unamplified = CalibrateSigmaUnamplified(
      in->epsilon, in->delta_prime(), in->strategy, in->schema);
  if (!unamplified.ok()) return unamplified.status();

  CommandOutput out;
  Json modes = Json::object();
  std::vector<double> mean_loss;
  for (TrainingMode mode :
       {TrainingMode::kPracticalBib, TrainingMode::kShuffleFixed,
        TrainingMode::kUnamplifiedSigma}) {
    const double sigma = mode == TrainingMode::kUnamplifiedSigma
                             ? *unamplified
                             : amplified->sigma;
    double total = 0.0;
    Json finals = Json::array();
    for (int r = 0; r < repeats; ++r) {
      TrainingConfig run = base;
      run.mode = mode;
      run.data_seed = base.data_seed + r;
      run.assignment_seed = base.assignment_seed + r;
      run.noise_seed = base.noise_seed + r;
      absl::StatusOr<TrainingResult> result = Train(run, in->strategy, sigma);
      if (!result.ok()) return result.status();
      total += result->final_loss;
      finals.push_back(result->final_loss);
      if (r == 0) {
        out.sidecars.emplace_back(
            absl::StrCat(".", TrainingModeName(mode), ".csv"),
            TrainingTraceCsv(*result));
        modes[TrainingModeName(mode)]["first_run"] =
            TrainingMetadataJson(run, in->strategy, sigma, *result);
      }
    }
    mean_loss.push_back(total / repeats);
    modes[TrainingModeName(mode)]["sigma"] = sigma;
    modes[TrainingModeName(mode)]["final_losses"] = finals;
    modes[TrainingModeName(mode)]["mean_final_loss"] = total / repeats;
  }
  const double implementation_gap = std::abs(mean_loss[0] - mean_loss[1]);
  const double amplification_gap = mean_loss[2] - mean_loss[0];
  Json report = {{"epsilon", in->epsilon},
                 {"delta", in->delta},
                 {"delta_prime", in->delta_prime()},
                 {"sigma_amplified", amplified->sigma},
                 {"sigma_unamplified", *unamplified},
                 {"repeats", repeats},
                 {"seed", in->seed},
                 {"matrix_fingerprint", MatrixFingerprint(in->strategy)},
                 {"modes", modes},
                 {"implementation_gap", implementation_gap},
                 {"amplification_gap", amplification_gap},
                 {"directional_check",
                  amplification_gap > 0.0 &&
                      implementation_gap < amplification_gap}};
  out.text = DumpJson(report);
  return out;
}

const std::vector<std::string>& CommandNames() {
  static const auto* names = new std::vector<std::string>{
      "calibrate", "verify", "rmse-sweep", "optimize", "counterexample",
      "train"};
  return *names;
}

absl::StatusOr<CommandOutput> RunCommand(const std::string& name,
                                         const Json& config) {
  if (name == "calibrate") return CmdCalibrate(config);
  if (name == "verify") return CmdVerify(config);
  if (name == "rmse-sweep") return CmdRmseSweep(config);
  if (name == "optimize") return CmdOptimize(config);
  if (name == "counterexample") return CmdCounterexample(config);
  if (name == "train") return CmdTrain(config);
  return absl::InvalidArgumentError(absl::StrCat("unknown command '", name, "'"));
}

}  // namespace corrdp
