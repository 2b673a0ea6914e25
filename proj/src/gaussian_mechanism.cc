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

#include "corrdp/gaussian_mechanism.h"

#include <cmath>

namespace corrdp {

double NormalCdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double AnalyticDelta(double epsilon, const GaussianMechanismSpec& spec) {
  const double ratio = spec.sensitivity / spec.sigma;
  const double shift = epsilon / ratio;
  const double delta = NormalCdf(0.5 * ratio - shift) -
                       std::exp(epsilon) * NormalCdf(-0.5 * ratio - shift);
  return std::max(delta, 0.0);
}

absl::StatusOr<double> CalibrateGaussianSigma(double epsilon, double delta,
                                              double sensitivity) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    return absl::InvalidArgumentError("epsilon must be finite and >= 0");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    return absl::InvalidArgumentError("delta must lie in (0, 1)");
  }
  if (!(sensitivity > 0.0) || !std::isfinite(sensitivity)) {
    return absl::InvalidArgumentError("sensitivity must be finite and > 0");
  }
  // Solve at unit sensitivity, then rescale: delta depends only on D / sigma.
  auto unit_delta = [epsilon](double sigma) {
    return AnalyticDelta(epsilon, {.sensitivity = 1.0, .sigma = sigma});
  };
  double lo = 1.0;
  double hi = 1.0;
  for (int i = 0; unit_delta(hi) > delta; ++i) {
    if (i > 200) return absl::OutOfRangeError("target delta unreachable");
    hi *= 2.0;
  }
  for (int i = 0; unit_delta(lo) <= delta; ++i) {
    if (i > 200) return absl::OutOfRangeError("target delta unreachable");
    lo *= 0.5;
  }
  for (int iter = 0; iter < 200 && (hi - lo) > 1e-6 * hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (unit_delta(mid) > delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi * sensitivity;
}

absl::StatusOr<double> CalibrateSigmaUnamplified(
    double epsilon, double delta, const StrategyMatrix& strategy,
    const ParticipationSchema& schema) {
  absl::StatusOr<double> sensitivity =
      UnamplifiedSensitivity(strategy, schema);
  if (!sensitivity.ok()) return sensitivity.status();
  return CalibrateGaussianSigma(epsilon, delta, *sensitivity);
}

}  // namespace corrdp
