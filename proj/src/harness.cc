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

#include "corrdp/harness.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <variant>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "corrdp/batching.h"
#include "corrdp/parallel.h"

namespace corrdp {
namespace {

Eigen::VectorXd StandardNormalVector(int size, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd out(size);
  for (int k = 0; k < size; ++k) out[k] = normal(rng);
  return out;
}

}  // namespace

NoiseStream::NoiseStream(StrategyMatrix strategy, int model_dim, double sigma)
    : strategy_(std::move(strategy)),
      order_(strategy_.order()),
      model_dim_(model_dim),
      sigma_(sigma) {}

absl::StatusOr<NoiseStream> NoiseStream::Create(const StrategyMatrix& strategy,
                                                int model_dim, double sigma) {
  if (model_dim < 1) {
    return absl::InvalidArgumentError("model_dim must be >= 1");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    return absl::InvalidArgumentError("sigma must be finite and >= 0");
  }
  NoiseStream stream(strategy, model_dim, sigma);
  const auto& rep = strategy.representation();
  if (const auto* dense = std::get_if<DenseStrategy>(&rep)) {
    stream.dense_ = dense->entries;
  } else if (const auto* banded = std::get_if<BandedStrategy>(&rep)) {
    stream.diagonals_ = banded->diagonals;
  } else if (const auto* toeplitz = std::get_if<ToeplitzStrategy>(&rep)) {
    const size_t support =
        std::min<size_t>(toeplitz->coeffs.size(), stream.order_);
    stream.coeffs_.assign(toeplitz->coeffs.begin(),
                          toeplitz->coeffs.begin() + support);
  } else if (const auto* blt = std::get_if<BltStrategy>(&rep)) {
    stream.weights_ = blt->weights;
    stream.decays_ = blt->decays;
    stream.buffers_ = Eigen::MatrixXd::Zero(
        model_dim, static_cast<Eigen::Index>(blt->weights.size()));
  }
  return stream;
}

int64_t NoiseStream::state_size() const {
  if (strategy_.family() == StrategyFamily::kBlt) return buffers_.size();
  return static_cast<int64_t>(history_.size()) * model_dim_;
}

absl::StatusOr<Eigen::VectorXd> NoiseStream::Next(
    const Eigen::VectorXd& z_row) {
  if (step_ >= order_) {
    return absl::FailedPreconditionError(
        absl::StrCat("noise stream exhausted after ", order_, " rows"));
  }
  if (z_row.size() != model_dim_) {
    return absl::InvalidArgumentError(absl::StrCat(
        "z row has ", z_row.size(), " entries, expected ", model_dim_));
  }
  const int i = step_;
  Eigen::VectorXd u = z_row;
  switch (strategy_.family()) {
    case StrategyFamily::kDense: {
      // history_ holds u_0 .. u_{i-1}.
      for (int k = 0; k < i; ++k) u -= dense_(i, k) * history_[k];
      u /= dense_(i, i);
      history_.push_back(u);
      break;
    }
    case StrategyFamily::kBanded: {
      const int width = static_cast<int>(diagonals_.size());
      const int lag_max = std::min(i, width - 1);
      // history_.back() is u_{i-1}.
      for (int d = 1; d <= lag_max; ++d) {
        u -= diagonals_[d][i - d] * history_[history_.size() - d];
      }
      u /= diagonals_[0][i];
      if (width > 1) {
        history_.push_back(u);
        if (static_cast<int>(history_.size()) > width - 1) history_.pop_front();
      }
      break;
    }
    case StrategyFamily::kToeplitz: {
      const int support = static_cast<int>(coeffs_.size());
      const int lag_max = std::min(i, support - 1);
      for (int d = 1; d <= lag_max; ++d) {
        if (coeffs_[d] != 0.0) u -= coeffs_[d] * history_[history_.size() - d];
      }
      u /= coeffs_[0];
      if (support > 1) {
        history_.push_back(u);
        if (static_cast<int>(history_.size()) > support - 1) {
          history_.pop_front();
        }
      }
      break;
    }
    case StrategyFamily::kBlt: {
      // c_0 = 1, so u_i = z_i - sum_m w_m s_m, then s_m <- theta_m s_m + u_i.
      for (size_t m = 0; m < weights_.size(); ++m) {
        u -= weights_[m] * buffers_.col(m);
      }
      for (size_t m = 0; m < weights_.size(); ++m) {
        buffers_.col(m) = decays_[m] * buffers_.col(m) + u;
      }
      break;
    }
  }
  ++step_;
  return Eigen::VectorXd(sigma_ * u);
}

std::string TrainingModeName(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::kPracticalBib:
      return "practical_bib";
    case TrainingMode::kShuffleFixed:
      return "shuffle_fixed";
    case TrainingMode::kUnamplifiedSigma:
      return "unamplified_sigma";
  }
  return "unknown";
}

absl::StatusOr<TrainingMode> ParseTrainingMode(const std::string& name) {
  for (TrainingMode mode :
       {TrainingMode::kPracticalBib, TrainingMode::kShuffleFixed,
        TrainingMode::kUnamplifiedSigma}) {
    if (TrainingModeName(mode) == name) return mode;
  }
  return absl::InvalidArgumentError(
      absl::StrCat("unknown training mode '", name, "'"));
}

absl::Status TrainingConfig::Validate() const {
  if (model_dim < 1) return absl::InvalidArgumentError("model_dim must be >= 1");
  if (dataset_size < 1) {
    return absl::InvalidArgumentError("dataset_size must be >= 1");
  }
  if (batches_per_epoch < 1 || epochs < 1) {
    return absl::InvalidArgumentError("batches_per_epoch and epochs must be >= 1");
  }
  if (batch_size < 1) return absl::InvalidArgumentError("batch_size must be >= 1");
  if (!(clip_norm > 0.0) || !std::isfinite(clip_norm)) {
    return absl::InvalidArgumentError("clip_norm must be positive");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    return absl::InvalidArgumentError("learning_rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    return absl::InvalidArgumentError("momentum must lie in [0, 1)");
  }
  if (!(label_noise >= 0.0) || !std::isfinite(label_noise)) {
    return absl::InvalidArgumentError("label_noise must be >= 0");
  }
  return absl::OkStatus();
}

nlohmann::json TrainingConfigToJson(const TrainingConfig& config) {
  return {{"model_dim", config.model_dim},
          {"dataset_size", config.dataset_size},
          {"batches_per_epoch", config.batches_per_epoch},
          {"epochs", config.epochs},
          {"batch_size", config.batch_size},
          {"clip_norm", config.clip_norm},
          {"learning_rate", config.learning_rate},
          {"momentum", config.momentum},
          {"label_noise", config.label_noise},
          {"data_seed", config.data_seed},
          {"assignment_seed", config.assignment_seed},
          {"noise_seed", config.noise_seed},
          {"mode", TrainingModeName(config.mode)}};
}

absl::StatusOr<TrainingConfig> TrainingConfigFromJson(
    const nlohmann::json& json) {
  if (!json.is_object()) {
    return absl::InvalidArgumentError("training config must be an object");
  }
  TrainingConfig config;
  try {
    config.model_dim = json.value("model_dim", config.model_dim);
    config.dataset_size = json.value("dataset_size", config.dataset_size);
    config.batches_per_epoch =
        json.value("batches_per_epoch", config.batches_per_epoch);
    config.epochs = json.value("epochs", config.epochs);
    config.batch_size = json.value("batch_size", config.batch_size);
    config.clip_norm = json.value("clip_norm", config.clip_norm);
    config.learning_rate = json.value("learning_rate", config.learning_rate);
    config.momentum = json.value("momentum", config.momentum);
    config.label_noise = json.value("label_noise", config.label_noise);
    config.data_seed = json.value("data_seed", config.data_seed);
    config.assignment_seed =
        json.value("assignment_seed", config.assignment_seed);
    config.noise_seed = json.value("noise_seed", config.noise_seed);
    if (json.contains("mode")) {
      absl::StatusOr<TrainingMode> mode =
          ParseTrainingMode(json.at("mode").get<std::string>());
      if (!mode.ok()) return mode.status();
      config.mode = *mode;
    }
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("bad training config: ", e.what()));
  }
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  return config;
}

SyntheticDataset MakeSyntheticDataset(int64_t dataset_size, int model_dim,
                                      double label_noise, uint64_t seed) {
  SyntheticDataset data;
  Rng model_rng = MakeStreamRng(seed, 0);
  Rng feature_rng = MakeStreamRng(seed, 1);
  Rng label_rng = MakeStreamRng(seed, 2);
  data.true_model = StandardNormalVector(model_dim, model_rng) /
                    std::sqrt(static_cast<double>(model_dim));
  data.features.resize(dataset_size, model_dim);
  data.targets.resize(dataset_size);
  std::normal_distribution<double> normal;
  for (int64_t k = 0; k < dataset_size; ++k) {
    for (int j = 0; j < model_dim; ++j) data.features(k, j) = normal(feature_rng);
    data.targets[k] = data.features.row(k).dot(data.true_model) +
                      label_noise * normal(label_rng);
  }
  return data;
}

double MeanSquaredLoss(const SyntheticDataset& data,
                       const Eigen::VectorXd& model) {
  const Eigen::VectorXd residual = data.features * model - data.targets;
  return 0.5 * residual.squaredNorm() / static_cast<double>(residual.size());
}

absl::StatusOr<TrainingResult> Train(const TrainingConfig& config,
                                     const StrategyMatrix& strategy,
                                     double sigma) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  const int n = config.iterations();
  if (strategy.order() != n) {
    return absl::InvalidArgumentError(
        absl::StrCat("strategy order ", strategy.order(),
                     " does not match b * E = ", n));
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    return absl::InvalidArgumentError("sigma must be finite and >= 0");
  }
  const int p = config.model_dim;
  const SyntheticDataset data = MakeSyntheticDataset(
      config.dataset_size, p, config.label_noise, config.data_seed);

  absl::StatusOr<AssignmentPlan> plan =
      config.mode == TrainingMode::kShuffleFixed
          ? AssignShuffleFixed(config.dataset_size, config.batches_per_epoch,
                               config.assignment_seed)
          : Assign(config.dataset_size, config.batches_per_epoch,
                   config.assignment_seed);
  if (!plan.ok()) return plan.status();

  absl::StatusOr<NoiseStream> stream = NoiseStream::Create(strategy, p);
  if (!stream.ok()) return stream.status();
  Rng noise_rng = MakeStreamRng(config.noise_seed, 0);
  const double batch = static_cast<double>(config.batch_size);
  const double noise_scale = sigma * config.clip_norm / batch;

  TrainingResult result;
  Eigen::VectorXd model = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(p);
  result.initial_loss = MeanSquaredLoss(data, model);

  for (int i = 1; i <= n; ++i) {
    absl::StatusOr<int> batch_index = Schedule(i, config.batches_per_epoch);
    if (!batch_index.ok()) return batch_index.status();
    absl::StatusOr<PracticalBatch> practical =
        PadTruncate(plan->Batch(*batch_index - 1), config.batch_size);
    if (!practical.ok()) return practical.status();

    // Real examples are summed in ascending index order so the sum does not
    // depend on the shuffle; sentinels contribute nothing.
    std::vector<int64_t> members;
    members.reserve(practical->example_indices.size());
    for (int64_t k : practical->example_indices) {
      if (k != kPadSentinel) members.push_back(k);
    }
    std::sort(members.begin(), members.end());

    Eigen::VectorXd gradient_sum = Eigen::VectorXd::Zero(p);
    for (int64_t k : members) {
      const double residual =
          data.features.row(k).dot(model) - data.targets[k];
      Eigen::VectorXd g = residual * data.features.row(k).transpose();
      const double norm = g.norm();
      if (norm > config.clip_norm) g *= config.clip_norm / norm;
      const double clipped = g.norm();
      if (clipped > config.clip_norm * (1.0 + 1e-12)) {
        return absl::InternalError(absl::StrCat(
            "clipped gradient norm ", clipped, " exceeds ", config.clip_norm));
      }
      result.max_clipped_norm = std::max(result.max_clipped_norm, clipped);
      gradient_sum += g;
    }
    const Eigen::VectorXd mean_gradient = gradient_sum / batch;

    absl::StatusOr<Eigen::VectorXd> noise_row =
        stream->Next(StandardNormalVector(p, noise_rng));
    if (!noise_row.ok()) return noise_row.status();
    const Eigen::VectorXd noise = noise_scale * *noise_row;

    velocity = config.momentum * velocity + (mean_gradient + noise);
    model -= config.learning_rate * velocity;

    TrainingStep record;
    record.step = i;
    record.loss = MeanSquaredLoss(data, model);
    record.grad_norm = mean_gradient.norm();
    record.noise_norm = noise.norm();
    record.real_count = practical->real_count;
    record.pad_count = practical->pad_count();
    record.truncated_count = practical->truncated_count;
    result.steps.push_back(record);
  }
  result.final_model = model;
  result.final_loss = MeanSquaredLoss(data, model);
  return result;
}

std::string TrainingTraceCsv(const TrainingResult& result) {
  std::string csv = "step,loss,grad_norm,noise_norm\n";
  for (const TrainingStep& s : result.steps) {
    absl::StrAppendFormat(&csv, "%d,%.17g,%.17g,%.17g\n", s.step, s.loss,
                          s.grad_norm, s.noise_norm);
  }
  return csv;
}

nlohmann::json TrainingMetadataJson(const TrainingConfig& config,
                                    const StrategyMatrix& strategy,
                                    double sigma,
                                    const TrainingResult& result) {
  int64_t pads = 0;
  int64_t truncated = 0;
  for (const TrainingStep& s : result.steps) {
    pads += s.pad_count;
    truncated += s.truncated_count;
  }
  return {{"config", TrainingConfigToJson(config)},
          {"family", FamilyName(strategy.family())},
          {"matrix_fingerprint", MatrixFingerprint(strategy)},
          {"sigma", sigma},
          {"steps", result.steps.size()},
          {"initial_loss", result.initial_loss},
          {"final_loss", result.final_loss},
          {"max_clipped_norm", result.max_clipped_norm},
          {"total_pad_slots", pads},
          {"total_truncated", truncated}};
}

}  // namespace corrdp
