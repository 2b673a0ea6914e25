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

// Monte Carlo privacy accounting for correlated noise under balls-in-bins
// batching.
//
// The dominating pair is P = (1/b) sum_i N(m_i, s^2 I) against Q = N(0, s^2 I)
// (add adjacency; the pair is swapped for remove). The privacy loss of a point
// x depends on x only through the inner products x . m_j, so each draw is
// stored in the b-dimensional mode span: a mode index i and a vector
// u ~ N(0, G) standing for Z . m_j, where G is the Gram matrix of the modes.
// A draw carries no sigma; the same draws serve every sigma probed during
// calibration.
//
// delta_hat(eps) = mean_j max{1 - exp(eps - Y_j), 0} estimates the
// hockey-stick divergence H_{e^eps}(P, Q).

#ifndef CORRDP_MONTE_CARLO_ACCOUNTANT_H_
#define CORRDP_MONTE_CARLO_ACCOUNTANT_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "corrdp/matrix_core.h"

namespace corrdp {

enum class Adjacency { kAdd, kRemove, kBoth };

std::string AdjacencyName(Adjacency adjacency);
absl::StatusOr<Adjacency> ParseAdjacency(const std::string& name);

struct PrivacyParams {
  double epsilon = 1.0;
  double delta = 1e-5;

  absl::Status Validate() const;
};

// Sigma-independent draws in the mode span. Mode indices are 0-based.
struct PldBaseSample {
  int num_modes = 0;
  int64_t sample_count = 0;
  uint64_t seed = 0;
  std::vector<int32_t> mode_indices;
  // Sample-major: num_modes values per draw.
  std::vector<double> projected_noise;

  std::span<const double> noise(int64_t j) const {
    return {projected_noise.data() + j * num_modes,
            static_cast<size_t>(num_modes)};
  }
};

// Draws with the full n-dimensional Z kept, for the sanity route and for
// differentiating with respect to C.
struct FullDimensionalSample {
  int dimension = 0;
  int num_modes = 0;
  int64_t sample_count = 0;
  uint64_t seed = 0;
  std::vector<int32_t> mode_indices;
  // Sample-major: dimension values per draw.
  std::vector<double> noise;

  std::span<const double> z(int64_t j) const {
    return {noise.data() + j * dimension, static_cast<size_t>(dimension)};
  }
};

// F with F F^T = G: Cholesky, retried with 1e-12 * trace(G) / b diagonal
// jitter, falling back to a symmetric eigen square root with negative
// eigenvalues clamped to zero.
absl::StatusOr<Eigen::MatrixXd> GramFactor(const Eigen::MatrixXd& gram);

// Deterministic in (modes, m, seed). Chunk c of kSampleChunkSize draws uses
// its own RNG stream derived from (seed, c).
absl::StatusOr<PldBaseSample> DrawBaseSample(const ModeSet& modes,
                                             int64_t sample_count,
                                             uint64_t seed);

absl::StatusOr<FullDimensionalSample> DrawFullDimensionalSample(
    int dimension, int num_modes, int64_t sample_count, uint64_t seed);

// u_j = Z . m_j for every draw.
absl::StatusOr<PldBaseSample> ProjectOntoModes(
    const FullDimensionalSample& sample, const ModeSet& modes);

// Y for a single draw. Add: log(P/Q)(m_i + s Z). Remove: log(Q/P)(s Z).
absl::StatusOr<double> LogDensityRatio(int mode_index,
                                       std::span<const double> u, double sigma,
                                       const Eigen::MatrixXd& gram,
                                       Adjacency adjacency);

struct EstimatorResult {
  double delta_hat = 0.0;
  double std_error = 0.0;
  int64_t sample_count = 0;
  Adjacency adjacency = Adjacency::kBoth;
};

struct AdjacencyEstimates {
  EstimatorResult add;
  EstimatorResult remove;
  // The larger of the two.
  EstimatorResult both;
};

absl::StatusOr<EstimatorResult> EstimateDelta(double epsilon, double sigma,
                                              const PldBaseSample& base,
                                              const Eigen::MatrixXd& gram,
                                              Adjacency adjacency);

absl::StatusOr<AdjacencyEstimates> EstimateDeltaPerAdjacency(
    double epsilon, double sigma, const PldBaseSample& base,
    const Eigen::MatrixXd& gram);

// Same draws and result as DrawBaseSample followed by
// EstimateDeltaPerAdjacency, generated chunk by chunk so that very large
// verification counts need no storage.
absl::StatusOr<AdjacencyEstimates> EstimateDeltaStreaming(
    double epsilon, double sigma, const ModeSet& modes, int64_t sample_count,
    uint64_t seed);

// exp(-s (tau - 1)^2 delta / (8 tau / 3 - 2 / 3)).
absl::StatusOr<double> BernsteinFailureProb(double samples, double tau,
                                            double delta);

enum class EvrDecision { kProceed, kAbort };

// Proceed iff delta_hat <= target.delta. A Proceed releases
// ReleasedGuarantee(target, tau).
EvrDecision EvrGate(const PrivacyParams& target, double delta_hat);
PrivacyParams ReleasedGuarantee(const PrivacyParams& target, double tau);

struct CalibrationOptions {
  double tau = 1.25;
  Adjacency adjacency = Adjacency::kBoth;
  double relative_tolerance = 1e-4;
  int max_iterations = 80;
  // Upper-bracket doublings allowed when Monte Carlo noise leaves
  // delta_hat(sigma_max) above the target.
  int max_bracket_expansions = 8;
};

struct CalibrationResult {
  double sigma = 0.0;
  double delta_prime = 0.0;
  double sigma_max = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  int bracket_expansions = 0;
  int iterations = 0;
  EstimatorResult estimate;
};

// Bisection for delta_hat(sigma) = target_delta on a fixed sample, starting
// from [sigma_lo, sigma_hi]. The returned sigma is the upper end of the final
// bracket, so delta_hat(sigma) <= target_delta.
absl::StatusOr<CalibrationResult> CalibrateSigmaOnSample(
    double epsilon, double target_delta, const PldBaseSample& base,
    const Eigen::MatrixXd& gram, double sigma_lo, double sigma_hi,
    const CalibrationOptions& options = {});

// Finds sigma* for (epsilon, delta / tau) with sample_count draws. The
// bracket is [1e-6 sigma_max, sigma_max] with sigma_max the unamplified
// analytic calibration.
absl::StatusOr<CalibrationResult> CalibrateSigma(
    double epsilon, double delta, const StrategyMatrix& strategy,
    const ParticipationSchema& schema, int64_t sample_count, uint64_t seed,
    const CalibrationOptions& options = {});

// Inverts delta_hat over epsilon in [0, 128] by bisection.
absl::StatusOr<double> EstimateEpsilon(double delta, double sigma,
                                       const PldBaseSample& base,
                                       const Eigen::MatrixXd& gram,
                                       Adjacency adjacency,
                                       double relative_tolerance = 1e-4);

}  // namespace corrdp

#endif  // CORRDP_MONTE_CARLO_ACCOUNTANT_H_
