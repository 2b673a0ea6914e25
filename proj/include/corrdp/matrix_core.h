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

// Correlation (strategy) matrices, the balls-in-bins participation schema and
// the quantities derived from them: mode vectors, unamplified sensitivity and
// the prefix-sum RMSE objective.

#ifndef CORRDP_MATRIX_CORE_H_
#define CORRDP_MATRIX_CORE_H_

#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace corrdp {

// b batches per epoch, E epochs, n = b * E iterations.
class ParticipationSchema {
 public:
  static absl::StatusOr<ParticipationSchema> Create(int batches_per_epoch,
                                                    int epochs);

  int batches_per_epoch() const { return batches_per_epoch_; }
  int epochs() const { return epochs_; }
  int iterations() const { return batches_per_epoch_ * epochs_; }

  bool operator==(const ParticipationSchema&) const = default;

 private:
  ParticipationSchema(int batches_per_epoch, int epochs)
      : batches_per_epoch_(batches_per_epoch), epochs_(epochs) {}

  int batches_per_epoch_;
  int epochs_;
};

struct DenseStrategy {
  Eigen::MatrixXd entries;
};

// diagonals[d] holds the n - d entries of the d-th subdiagonal (d = 0 is the
// main diagonal). Only the first band_width diagonals are stored.
struct BandedStrategy {
  int order = 0;
  std::vector<std::vector<double>> diagonals;
};

// M[i, j] = coeffs[i - j] for i >= j. Coefficients beyond coeffs.size() are
// zero.
struct ToeplitzStrategy {
  int order = 0;
  std::vector<double> coeffs;
};

// Buffered linear Toeplitz: c_0 = 1, c_k = sum_m weights[m] * decays[m]^(k-1).
struct BltStrategy {
  int order = 0;
  std::vector<double> weights;
  std::vector<double> decays;
};

enum class StrategyFamily { kDense, kBanded, kToeplitz, kBlt };

std::string FamilyName(StrategyFamily family);

// Lower-triangular correlation matrix C with positive diagonal. Instances are
// only constructible through the validating factories below.
class StrategyMatrix {
 public:
  using Representation =
      std::variant<DenseStrategy, BandedStrategy, ToeplitzStrategy,
                   BltStrategy>;

  static absl::StatusOr<StrategyMatrix> Dense(Eigen::MatrixXd entries);
  static absl::StatusOr<StrategyMatrix> Banded(
      int order, std::vector<std::vector<double>> diagonals);
  static absl::StatusOr<StrategyMatrix> Toeplitz(int order,
                                                 std::vector<double> coeffs);
  static absl::StatusOr<StrategyMatrix> Blt(int order,
                                            std::vector<double> weights,
                                            std::vector<double> decays);
  static StrategyMatrix Identity(int order);

  int order() const;
  StrategyFamily family() const;
  const Representation& representation() const { return rep_; }

 private:
  explicit StrategyMatrix(Representation rep) : rep_(std::move(rep)) {}

  Representation rep_;
};

// Canonical dense n x n form of any family.
Eigen::MatrixXd Materialize(const StrategyMatrix& strategy);

// Full length-n Toeplitz coefficient vector for Toeplitz and BLT strategies;
// NotFound for the other families.
absl::StatusOr<std::vector<double>> ToeplitzCoefficients(
    const StrategyMatrix& strategy);

// Expands BLT parameters into n Toeplitz coefficients.
std::vector<double> ExpandBltCoefficients(int order,
                                          std::span<const double> weights,
                                          std::span<const double> decays);

// The b mixture means of the balls-in-bins dominating pair, stored as the
// columns of `modes` (n x b), with their Gram matrix.
struct ModeSet {
  Eigen::MatrixXd modes;
  Eigen::MatrixXd gram;

  int num_modes() const { return static_cast<int>(modes.cols()); }
  int dimension() const { return static_cast<int>(modes.rows()); }
};

// m_i = sum_{j=0}^{E-1} |C|[:, b*j + i] with 0-based batch index i: the
// columns of every iteration that uses batch i.
absl::StatusOr<ModeSet> ModeVectors(const StrategyMatrix& strategy,
                                    const ParticipationSchema& schema);
absl::StatusOr<ModeSet> ModeVectors(const Eigen::MatrixXd& strategy,
                                    const ParticipationSchema& schema);

// max_i ||m_i||_2.
absl::StatusOr<double> UnamplifiedSensitivity(
    const StrategyMatrix& strategy, const ParticipationSchema& schema);
double UnamplifiedSensitivity(const ModeSet& modes);

// g with Toeplitz(g) = Toeplitz(c)^{-1}, truncated to n terms.
absl::StatusOr<std::vector<double>> ToeplitzInverseCoeffs(
    std::span<const double> coeffs, int order);

// ||A C^{-1}||_F where A is the all-ones lower-triangular matrix.
absl::StatusOr<double> PrefixErrorNormDense(const Eigen::MatrixXd& strategy);
absl::StatusOr<double> PrefixErrorNormToeplitz(std::span<const double> coeffs,
                                               int order);

// sigma * ||A C^{-1}||_F, using the Toeplitz recurrence when available.
absl::StatusOr<double> Rmse(const StrategyMatrix& strategy, double sigma);

// Stable 64-bit fingerprint of the materialized matrix, as 16 hex digits.
std::string MatrixFingerprint(const StrategyMatrix& strategy);

}  // namespace corrdp

#endif  // CORRDP_MATRIX_CORE_H_
