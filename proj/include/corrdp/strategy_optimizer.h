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

// Gradient descent over Toeplitz and BLT correlation matrices for the
// amplified prefix-sum RMSE sigma*(C) * ||A C^{-1}||_F, where sigma*(C) is
// the Monte Carlo calibrated noise multiplier. The sigma gradient comes from
// implicit differentiation of delta_hat(sigma, C) = delta'.
//
// All derivatives are taken with respect to the full Toeplitz coefficient
// vector c_0..c_{n-1} and then mapped to family parameters. Since the modes
// are built from |C|, d|c|/dc is taken as sign(c) with sign(0) = +1, the
// derivative from the feasible side.

#ifndef CORRDP_STRATEGY_OPTIMIZER_H_
#define CORRDP_STRATEGY_OPTIMIZER_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "corrdp/matrix_core.h"
#include "corrdp/monte_carlo_accountant.h"
#include "json.hpp"

namespace corrdp {

struct DeltaPartials {
  double d_sigma = 0.0;
  // d delta_hat / d c_k for k = 0..n-1.
  std::vector<double> d_coeffs;
  // delta_hat of the adjacency that was differentiated (the larger one for
  // kBoth).
  EstimatorResult estimate;
};

// Closed-form derivatives of delta_hat for Toeplitz(coeffs) on the draws of
// `sample` (u_j = Z . m_j recomputed from Z for the given coefficients).
absl::StatusOr<DeltaPartials> DeltaHatPartials(
    double epsilon, double sigma, std::span<const double> coeffs,
    const ParticipationSchema& schema, const FullDimensionalSample& sample,
    Adjacency adjacency = Adjacency::kBoth);

// -(d delta_hat / d c) / (d delta_hat / d sigma). FailedPrecondition when
// |d delta_hat / d sigma| < 1e-3 * target_delta / sigma.
absl::StatusOr<std::vector<double>> ImplicitSigmaGradient(
    const DeltaPartials& partials, double target_delta, double sigma);

// d ||A C^{-1}||_F / d c_k for Toeplitz(coeffs), k = 0..n-1.
absl::StatusOr<std::vector<double>> PrefixErrorNormGradient(
    std::span<const double> coeffs, int order);

// Gradient of sigma * ||A C^{-1}||_F given d sigma / d c.
absl::StatusOr<std::vector<double>> RmseGradient(
    std::span<const double> coeffs, int order, double sigma,
    std::span<const double> sigma_gradient);

enum class OptimizerFamily { kToeplitz, kBlt };

// Free parameters of a family and the map to Toeplitz coefficients.
//   toeplitz: (c_1, ..., c_{n-1}), c_0 = 1.
//   blt:      (w_1, ..., w_d, theta_1, ..., theta_d).
class StrategyParameterization {
 public:
  static StrategyParameterization Toeplitz(int order);
  static StrategyParameterization Blt(int order, int buffers);

  OptimizerFamily family() const { return family_; }
  int order() const { return order_; }
  int buffers() const { return buffers_; }
  int num_params() const;

  // Identity for Toeplitz; w = 0.1 and theta evenly spaced in (0.3, 0.9)
  // for BLT.
  std::vector<double> DefaultInitialization() const;
  std::vector<double> Coefficients(std::span<const double> params) const;
  // Chain rule from d/dc_k (k = 0..n-1) to d/dparams.
  std::vector<double> PullBack(std::span<const double> params,
                               std::span<const double> coeff_gradient) const;
  // c_k >= 0 for Toeplitz; w >= 0, theta in [1e-3, 1 - 1e-3] for BLT.
  std::vector<double> Project(std::span<const double> params) const;
  absl::StatusOr<StrategyMatrix> ToStrategy(
      std::span<const double> params) const;
  absl::Status CheckParams(std::span<const double> params) const;

 private:
  StrategyParameterization(OptimizerFamily family, int order, int buffers)
      : family_(family), order_(order), buffers_(buffers) {}

  OptimizerFamily family_;
  int order_;
  int buffers_;
};

// sigma with delta_hat(sigma) <= target_delta, at relative distance
// <= relative_tolerance from the root, on a fixed sample. Starts from
// [sigma_lo, sigma_hi] (expanded if needed) and uses TOMS 748 bracketing.
absl::StatusOr<double> SolveSigmaOnSample(double epsilon, double target_delta,
                                          const PldBaseSample& base,
                                          const Eigen::MatrixXd& gram,
                                          double sigma_lo, double sigma_hi,
                                          Adjacency adjacency,
                                          double relative_tolerance = 1e-10);

struct OptimizerConfig {
  OptimizerFamily family = OptimizerFamily::kToeplitz;
  int buffers = 3;
  double epsilon = 1.0;
  double delta = 1e-5;
  double tau = 1.25;
  int batches_per_epoch = 1;
  int epochs = 1;
  int steps = 50;
  double learning_rate = 1e-3;
  int64_t samples_per_step = 512;
  int64_t final_sample_count = int64_t{1} << 20;
  uint64_t seed = 0;
  bool resample_each_step = true;
  // Empty means the family default.
  std::vector<double> initial_params;

  absl::Status Validate() const;
};

struct StepRecord {
  int step = 0;
  // Objective and sigma of the current iterate on this step's sample.
  double rmse = 0.0;
  double sigma = 0.0;
  double gradient_norm = 0.0;
  bool accepted = false;
  bool degenerate = false;
  int halvings = 0;
  double step_size = 0.0;
  // Objective after the step on the same sample (equal to rmse if rejected).
  double candidate_rmse = 0.0;
};

struct OptimizationTrace {
  std::vector<StepRecord> steps;
  std::vector<double> final_params;
  double final_sigma = 0.0;
  double final_rmse = 0.0;
  double initial_sigma = 0.0;
  double initial_rmse = 0.0;
  std::string stop_reason;
};

struct OptimizationResult {
  std::vector<double> params;
  StrategyMatrix strategy = StrategyMatrix::Identity(1);
  // From the final calibration with final_sample_count draws and an
  // independent seed.
  double sigma = 0.0;
  double rmse = 0.0;
  CalibrationResult final_calibration;
  OptimizationTrace trace;
};

absl::StatusOr<OptimizationResult> Optimize(const OptimizerConfig& config);

absl::StatusOr<OptimizerConfig> OptimizerConfigFromJson(
    const nlohmann::json& json);
nlohmann::json OptimizerConfigToJson(const OptimizerConfig& config);
nlohmann::json TraceToJson(const OptimizationTrace& trace);

}  // namespace corrdp

#endif  // CORRDP_STRATEGY_OPTIMIZER_H_
