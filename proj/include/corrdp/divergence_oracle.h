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

// Deterministic hockey-stick divergence between a mixture of isotropic
// Gaussians and the centred Gaussian, for mode spans of dimension <= 4.
// Independent of the Monte Carlo path; used to validate it.

#ifndef CORRDP_DIVERGENCE_ORACLE_H_
#define CORRDP_DIVERGENCE_ORACLE_H_

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "absl/status/statusor.h"

namespace corrdp {

inline constexpr int kMaxOracleDimension = 4;

// P = sum_i w_i N(m_i, s^2 I), Q = N(0, s^2 I).
class LowDimPair {
 public:
  static absl::StatusOr<LowDimPair> Create(std::vector<Eigen::VectorXd> modes,
                                           std::vector<double> weights,
                                           double sigma);
  // Equal weights over the columns of `modes`.
  static absl::StatusOr<LowDimPair> Uniform(const Eigen::MatrixXd& modes,
                                            double sigma);

  int effective_dim() const { return static_cast<int>(reduced_.rows()); }
  double sigma() const { return sigma_; }
  const std::vector<double>& weights() const { return weights_; }
  // Mode coordinates in an orthonormal basis of their span (columns).
  const Eigen::MatrixXd& reduced_modes() const { return reduced_; }

 private:
  LowDimPair(Eigen::MatrixXd reduced, std::vector<double> weights,
             double sigma)
      : reduced_(std::move(reduced)),
        weights_(std::move(weights)),
        sigma_(sigma) {}

  Eigen::MatrixXd reduced_;
  std::vector<double> weights_;
  double sigma_;
};

// H_alpha(P, Q) = int max{P - alpha Q, 0}. The complement of the mode span
// integrates out exactly. Of the remaining <= 4 coordinates the last is
// integrated in closed form and the others by nested adaptive Gauss-Kronrod
// over +-(max ||m|| + 10 s). The tolerance is
// tightened until two successive results differ by < 1e-9.
absl::StatusOr<double> HockeyStickQuadrature(const LowDimPair& pair,
                                             double alpha);

// (H_alpha(M(1, -1), Q), H_alpha(M(1, 1), Q)) where
// M(a, b) = 1/2 N((a, -a), s^2 I) + 1/2 N((0, b), s^2 I): the input pattern
// b = -a correlates the two modes and is the worse one.
absl::StatusOr<std::pair<double, double>> AdaptivityCounterexampleCheck(
    double sigma, double alpha);

}  // namespace corrdp

#endif  // CORRDP_DIVERGENCE_ORACLE_H_
