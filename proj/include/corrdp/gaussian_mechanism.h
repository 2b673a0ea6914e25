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

// Analytic (unamplified) accounting for the Gaussian mechanism. Used as the
// "no amplification" baseline and as the upper end of the sigma bracket for
// Monte Carlo calibration.

#ifndef CORRDP_GAUSSIAN_MECHANISM_H_
#define CORRDP_GAUSSIAN_MECHANISM_H_

#include "absl/status/statusor.h"
#include "corrdp/matrix_core.h"

namespace corrdp {

struct GaussianMechanismSpec {
  double sensitivity = 1.0;
  double sigma = 1.0;
};

// Standard normal CDF through erfc, accurate deep into the lower tail.
double NormalCdf(double x);

// delta(eps) = Phi(D/(2s) - eps*s/D) - e^eps * Phi(-D/(2s) - eps*s/D).
double AnalyticDelta(double epsilon, const GaussianMechanismSpec& spec);

// Smallest sigma with AnalyticDelta(epsilon) <= delta for the given
// sensitivity, to relative tolerance 1e-6. Exactly proportional to the
// sensitivity.
absl::StatusOr<double> CalibrateGaussianSigma(double epsilon, double delta,
                                              double sensitivity);

// Same, with sensitivity max_i ||m_i|| of the balls-in-bins modes of C.
absl::StatusOr<double> CalibrateSigmaUnamplified(
    double epsilon, double delta, const StrategyMatrix& strategy,
    const ParticipationSchema& schema);

}  // namespace corrdp

#endif  // CORRDP_GAUSSIAN_MECHANISM_H_
