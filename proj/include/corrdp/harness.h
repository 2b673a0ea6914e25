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

// Streaming correlated noise and a small private training loop on a
// synthetic linear-regression task.

#ifndef CORRDP_HARNESS_H_
#define CORRDP_HARNESS_H_

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "corrdp/matrix_core.h"
#include "json.hpp"

namespace corrdp {

// Emits sigma * (C^{-1} Z)[i, :] one row at a time by forward substitution,
// keeping only the state the family needs: every past row for dense, the
// last band_width - 1 rows for banded, the last (support - 1) rows for
// Toeplitz, and d buffers of model_dim values for BLT.
class NoiseStream {
 public:
  static absl::StatusOr<NoiseStream> Create(const StrategyMatrix& strategy,
                                            int model_dim, double sigma = 1.0);

  // Consumes row i of Z and returns row i of sigma * C^{-1} Z.
  // FailedPrecondition once all n rows have been produced.
  absl::StatusOr<Eigen::VectorXd> Next(const Eigen::VectorXd& z_row);

  int step() const { return step_; }
  int order() const { return order_; }
  int model_dim() const { return model_dim_; }
  // Number of doubles currently held as recurrence state.
  int64_t state_size() const;

 private:
  NoiseStream(StrategyMatrix strategy, int model_dim, double sigma);

  StrategyMatrix strategy_;
  int order_;
  int model_dim_;
  double sigma_;
  int step_ = 0;

  Eigen::MatrixXd dense_;  // Materialized C for the dense family.
  std::vector<std::vector<double>> diagonals_;  // Banded.
  std::vector<double> coeffs_;                  // Toeplitz, trimmed.
  std::vector<double> weights_;                 // BLT.
  std::vector<double> decays_;                  // BLT.

  // Solved rows, newest at the back (dense, banded, Toeplitz).
  std::deque<Eigen::VectorXd> history_;
  // BLT buffers s_m = sum_{k < i} theta_m^{i-1-k} u_k, one column per buffer.
  Eigen::MatrixXd buffers_;
};

enum class TrainingMode { kPracticalBib, kShuffleFixed, kUnamplifiedSigma };

std::string TrainingModeName(TrainingMode mode);
absl::StatusOr<TrainingMode> ParseTrainingMode(const std::string& name);

struct TrainingConfig {
  int model_dim = 8;
  int64_t dataset_size = 1000;
  int batches_per_epoch = 10;
  int epochs = 1;
  int64_t batch_size = 100;
  double clip_norm = 1.0;
  double learning_rate = 0.1;
  double momentum = 0.0;
  // Standard deviation of the label noise in the synthetic task.
  double label_noise = 0.5;
  uint64_t data_seed = 1;
  uint64_t assignment_seed = 2;
  uint64_t noise_seed = 3;
  // kPracticalBib and kUnamplifiedSigma share the balls-in-bins pipeline and
  // differ only in the sigma the caller passes; kShuffleFixed uses one
  // shuffle cut into near-equal batches.
  TrainingMode mode = TrainingMode::kPracticalBib;

  int iterations() const { return batches_per_epoch * epochs; }
  absl::Status Validate() const;
};

nlohmann::json TrainingConfigToJson(const TrainingConfig& config);
// Missing keys keep their defaults.
absl::StatusOr<TrainingConfig> TrainingConfigFromJson(
    const nlohmann::json& json);

// Gaussian features, labels y = <x, w*> + label_noise * N(0, 1) with
// w* ~ N(0, I / p).
struct SyntheticDataset {
  Eigen::MatrixXd features;  // dataset_size x p.
  Eigen::VectorXd targets;
  Eigen::VectorXd true_model;
};

SyntheticDataset MakeSyntheticDataset(int64_t dataset_size, int model_dim,
                                      double label_noise, uint64_t seed);

// Mean of 0.5 (<x, w> - y)^2 over the dataset.
double MeanSquaredLoss(const SyntheticDataset& data,
                       const Eigen::VectorXd& model);

struct TrainingStep {
  int step = 0;  // 1-based.
  double loss = 0.0;       // Full-dataset loss after the update.
  double grad_norm = 0.0;  // Norm of the clipped mean gradient.
  double noise_norm = 0.0;
  int64_t real_count = 0;
  int64_t pad_count = 0;
  int64_t truncated_count = 0;
};

struct TrainingResult {
  std::vector<TrainingStep> steps;
  Eigen::VectorXd final_model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  // Largest per-example gradient norm after clipping, over the whole run.
  double max_clipped_norm = 0.0;
};

// Runs n = b * E steps starting from w = 0. Each step averages clipped
// per-example gradients with fixed 1/B normalization, adds
// sigma * clip_norm / B times the next correlated noise row, then applies
// momentum and the learning rate. The strategy order must equal n.
absl::StatusOr<TrainingResult> Train(const TrainingConfig& config,
                                     const StrategyMatrix& strategy,
                                     double sigma);

// step,loss,grad_norm,noise_norm with a header row.
std::string TrainingTraceCsv(const TrainingResult& result);
nlohmann::json TrainingMetadataJson(const TrainingConfig& config,
                                    const StrategyMatrix& strategy,
                                    double sigma,
                                    const TrainingResult& result);

}  // namespace corrdp

#endif  // CORRDP_HARNESS_H_
