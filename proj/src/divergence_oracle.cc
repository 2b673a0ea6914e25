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

#include "corrdp/divergence_oracle.h"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "absl/strings/str_cat.h"

namespace corrdp {
namespace {

constexpr double kRankTolerance = 1e-10;
constexpr double kConvergence = 1e-9;
constexpr int kMaxRefinements = 4;

double StdNormalCdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Works in units of sigma: Q = N(0, I), P = sum_i w_i N(mu_i, I) in d <= 4
// coordinates. The outer d - 1 coordinates are integrated by nested adaptive
// Gauss-Kronrod; the last one in closed form. Along the last axis
//   P - alpha Q = phi(t) h(t),  h(t) = sum_i c_i e^{a_i t} - alpha,  c_i >= 0,
// and h is convex, so {h <= 0} is a single interval [t1, t2] and
//   int_{h > 0} phi(t) c_i e^{a_i t} dt
//     = c_i e^{a_i^2 / 2} (Phi(t1 - a_i) + Phi(a_i - t2)).
class LineIntegrator {
 public:
  LineIntegrator(const Eigen::MatrixXd& mu, std::span<const double> weights,
                 double alpha, double radius, double tolerance)
      : mu_(mu),
        weights_(weights.begin(), weights.end()),
        alpha_(alpha),
        radius_(radius),
        tolerance_(tolerance),
        dim_(static_cast<int>(mu.rows())),
        coeff_(mu.cols()),
        slope_(mu.cols()),
        outer_density_(mu.cols()) {
    for (Eigen::Index i = 0; i < mu.cols(); ++i) slope_[i] = mu(dim_ - 1, i);
  }

  double Integrate() { return dim_ == 1 ? Line() : Level(0); }

 private:
  double Level(int k) {
    auto f = [this, k](double t) {
      point_[k] = t;
      return k + 2 == dim_ ? Line() : Level(k + 1);
    };
    return boost::math::quadrature::gauss_kronrod<double, 21>::integrate(
        f, -radius_, radius_, 20, tolerance_);
  }

  // h^(order)(t) for order 0, 1, 2.
  double Derivative(int order, double t) const {
    double acc = order == 0 ? -alpha_ : 0.0;
    for (size_t i = 0; i < coeff_.size(); ++i) {
      const double scale = order == 0   ? 1.0
                           : order == 1 ? slope_[i]
                                        : slope_[i] * slope_[i];
      acc += coeff_[i] * scale * std::exp(slope_[i] * t);
    }
    return acc;
  }

  // Zero of the increasing function h^(order) on [lo, hi] by Newton steps,
  // falling back to bisection when a step leaves the bracket.
  double Zero(int order, double lo, double hi, bool increasing) const {
    double t = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
      const double value = Derivative(order, t);
      if (value == 0.0) return t;
      if ((value > 0.0) == increasing) {
        hi = t;
      } else {
        lo = t;
      }
      const double slope = Derivative(order + 1, t);
      double next = slope != 0.0 ? t - value / slope : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - t) <= 1e-15 * (1.0 + std::abs(t)) ||
          hi - lo <= 1e-15 * (1.0 + std::abs(hi))) {
        return next;
      }
      t = next;
    }
    return t;
  }

  // Integral over the last coordinate, times the density of the outer ones.
  double Line() {
    const int outer = dim_ - 1;
    double outer_sq = 0.0;
    for (int k = 0; k < outer; ++k) outer_sq += point_[k] * point_[k];
    for (size_t i = 0; i < coeff_.size(); ++i) {
      double dot = 0.0;
      double shifted_sq = 0.0;
      double mu_outer_sq = 0.0;
      for (int k = 0; k < outer; ++k) {
        dot += point_[k] * mu_(k, i);
        mu_outer_sq += mu_(k, i) * mu_(k, i);
        const double diff = point_[k] - mu_(k, i);
        shifted_sq += diff * diff;
      }
      coeff_[i] = weights_[i] *
                  std::exp(dot - 0.5 * (mu_outer_sq + slope_[i] * slope_[i]));
      // phi(t_o) c_i e^{a_i^2 / 2} = w_i phi(t_o - mu_o,i).
      outer_density_[i] = weights_[i] * std::exp(-0.5 * shifted_sq);
    }
    const double norm = std::pow(2.0 * std::numbers::pi, -0.5 * outer);
    const double null_density = std::exp(-0.5 * outer_sq);

    // Minimizer of the convex h on [-radius, radius].
    double t_min;
    if (Derivative(1, -radius_) >= 0.0) {
      t_min = -radius_;
    } else if (Derivative(1, radius_) <= 0.0) {
      t_min = radius_;
    } else {
      t_min = Zero(1, -radius_, radius_, /*increasing=*/true);
    }
    double excess = -alpha_ * null_density;
    if (Derivative(0, t_min) >= 0.0) {
      for (double d : outer_density_) excess += d;
      return norm * std::max(excess, 0.0);
    }
    const double inf = std::numeric_limits<double>::infinity();
    const double t1 = Derivative(0, -radius_) > 0.0
                          ? Zero(0, -radius_, t_min, /*increasing=*/false)
                          : -inf;
    const double t2 = Derivative(0, radius_) > 0.0
                          ? Zero(0, t_min, radius_, /*increasing=*/true)
                          : inf;
    excess = -alpha_ * null_density * (StdNormalCdf(t1) + StdNormalCdf(-t2));
    for (size_t i = 0; i < coeff_.size(); ++i) {
      excess += outer_density_[i] * (StdNormalCdf(t1 - slope_[i]) +
                                     StdNormalCdf(slope_[i] - t2));
    }
    return norm * std::max(excess, 0.0);
  }

  const Eigen::MatrixXd& mu_;
  std::vector<double> weights_;
  double alpha_;
  double radius_;
  double tolerance_;
  int dim_;
  std::vector<double> coeff_;
  std::vector<double> slope_;
  std::vector<double> outer_density_;
  std::array<double, kMaxOracleDimension> point_{};
};

}  // namespace

absl::StatusOr<LowDimPair> LowDimPair::Create(
    std::vector<Eigen::VectorXd> modes, std::vector<double> weights,
    double sigma) {
  if (modes.empty() || modes.size() != weights.size()) {
    return absl::InvalidArgumentError("need one weight per mode");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    return absl::InvalidArgumentError("sigma must be finite and > 0");
  }
  const Eigen::Index n = modes[0].size();
  double total = 0.0;
  for (size_t i = 0; i < modes.size(); ++i) {
    if (modes[i].size() != n || !modes[i].allFinite()) {
      return absl::InvalidArgumentError("modes must be finite, equal length");
    }
    if (!(weights[i] >= 0.0)) {
      return absl::InvalidArgumentError("weights must be nonnegative");
    }
    total += weights[i];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    return absl::InvalidArgumentError("weights must sum to 1");
  }
  Eigen::MatrixXd stacked(n, modes.size());
  for (size_t i = 0; i < modes.size(); ++i) stacked.col(i) = modes[i];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double scale = sv.size() > 0 ? sv[0] : 0.0;
  int rank = 0;
  while (rank < sv.size() && sv[rank] > kRankTolerance * std::max(scale, 1.0)) {
    ++rank;
  }
  if (rank > kMaxOracleDimension) {
    return absl::InvalidArgumentError(absl::StrCat(
        "mode span has dimension ", rank, " > ", kMaxOracleDimension));
  }
  Eigen::MatrixXd reduced =
      svd.matrixU().leftCols(rank).transpose() * stacked;
  return LowDimPair(std::move(reduced), std::move(weights), sigma);
}

absl::StatusOr<LowDimPair> LowDimPair::Uniform(const Eigen::MatrixXd& modes,
                                               double sigma) {
  std::vector<Eigen::VectorXd> cols;
  for (Eigen::Index i = 0; i < modes.cols(); ++i) cols.push_back(modes.col(i));
  std::vector<double> weights(cols.size(), 1.0 / cols.size());
  return Create(std::move(cols), std::move(weights), sigma);
}

absl::StatusOr<double> HockeyStickQuadrature(const LowDimPair& pair,
                                             double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    return absl::InvalidArgumentError("alpha must be finite and >= 0");
  }
  if (pair.effective_dim() == 0) return std::max(1.0 - alpha, 0.0);
  const Eigen::MatrixXd mu = pair.reduced_modes() / pair.sigma();
  const double radius = mu.colwise().norm().maxCoeff() + 10.0;
  double tolerance = 1e-8;
  double previous =
      LineIntegrator(mu, pair.weights(), alpha, radius, tolerance)
          .Integrate();
  for (int refinement = 0; refinement < kMaxRefinements; ++refinement) {
    tolerance *= 1e-2;
    const double current =
        LineIntegrator(mu, pair.weights(), alpha, radius, tolerance)
            .Integrate();
    if (std::abs(current - previous) < kConvergence) {
      return std::clamp(current, 0.0, 1.0);
    }
    previous = current;
  }
  return absl::InternalError("hockey-stick quadrature did not converge");
}

absl::StatusOr<std::pair<double, double>> AdaptivityCounterexampleCheck(
    double sigma, double alpha) {
  auto divergence = [&](double b) -> absl::StatusOr<double> {
    absl::StatusOr<LowDimPair> pair = LowDimPair::Create(
        {Eigen::Vector2d(1.0, -1.0), Eigen::Vector2d(0.0, b)}, {0.5, 0.5},
        sigma);
    if (!pair.ok()) return pair.status();
    return HockeyStickQuadrature(*pair, alpha);
  };
  absl::StatusOr<double> opposite = divergence(-1.0);
  if (!opposite.ok()) return opposite.status();
  absl::StatusOr<double> same = divergence(1.0);
  if (!same.ok()) return same.status();
  return std::make_pair(*opposite, *same);
}

}  // namespace corrdp
