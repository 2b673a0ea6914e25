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

#include "corrdp/strategy_optimizer.h"

#include <cmath>
#include <random>
#include <vector>

#include "corrdp/gaussian_mechanism.h"
#include "gtest/gtest.h"
#include "status_matchers.h"

namespace corrdp {
namespace {

constexpr double kEpsilon = 1.0;
constexpr double kDeltaPrime = 8e-6;

ParticipationSchema Schema(int b, int epochs) {
  return *ParticipationSchema::Create(b, epochs);
}

std::vector<double> RandomFeasible(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.02, 0.4);
  std::vector<double> c(n);
  c[0] = 1.0;
  for (int k = 1; k < n; ++k) c[k] = unif(rng) / k;
  return c;
}

double RelativeError(std::span<const double> got,
                     std::span<const double> want) {
  double diff = 0.0;
  double ref = 0.0;
  for (size_t k = 0; k < want.size(); ++k) {
    diff += (got[k] - want[k]) * (got[k] - want[k]);
    ref += want[k] * want[k];
  }
  return std::sqrt(diff / ref);
}

// delta_hat of Toeplitz(c) at sigma on the projection of a fixed Z sample.
double DeltaHat(std::span<const double> c, double sigma,
                const ParticipationSchema& schema,
                const FullDimensionalSample& sample, Adjacency adjacency) {
  const StrategyMatrix strategy =
      *StrategyMatrix::Toeplitz(schema.iterations(), {c.begin(), c.end()});
  const ModeSet modes = *ModeVectors(strategy, schema);
  const PldBaseSample base = *ProjectOntoModes(sample, modes);
  return EstimateDelta(kEpsilon, sigma, base, modes.gram, adjacency)
      ->delta_hat;
}

// sigma*(c) on the fixed sample, solved far below finite-difference noise.
double SigmaStar(std::span<const double> c, const ParticipationSchema& schema,
                 const FullDimensionalSample& sample) {
  const StrategyMatrix strategy =
      *StrategyMatrix::Toeplitz(schema.iterations(), {c.begin(), c.end()});
  const ModeSet modes = *ModeVectors(strategy, schema);
  const PldBaseSample base = *ProjectOntoModes(sample, modes);
  const double sigma_max = *CalibrateGaussianSigma(
      kEpsilon, kDeltaPrime, UnamplifiedSensitivity(modes));
  return *SolveSigmaOnSample(kEpsilon, kDeltaPrime, base, modes.gram,
                             1e-6 * sigma_max, sigma_max, Adjacency::kBoth,
                             1e-14);
}

struct GradientCase {
  int batches;
  int epochs;
  Adjacency adjacency;
};

class DeltaHatPartialsTest : public ::testing::TestWithParam<GradientCase> {};

TEST_P(DeltaHatPartialsTest, MatchesFiniteDifferences) {
  const GradientCase& p = GetParam();
  const ParticipationSchema schema = Schema(p.batches, p.epochs);
  const int n = schema.iterations();
  std::mt19937_64 rng(100 + n);
  const std::vector<double> c = RandomFeasible(n, rng);
  ASSERT_OK_AND_ASSIGN(FullDimensionalSample sample,
                       DrawFullDimensionalSample(n, p.batches, 1 << 15, 7));
  const double sigma = SigmaStar(c, schema, sample);
  ASSERT_OK_AND_ASSIGN(DeltaPartials partials,
                       DeltaHatPartials(kEpsilon, sigma, c, schema, sample,
                                        p.adjacency));
  const double reference = DeltaHat(c, sigma, schema, sample, p.adjacency);
  ASSERT_GT(reference, 0.0);
  EXPECT_NEAR(partials.estimate.delta_hat, reference, 1e-12 * reference);

  // h = 1e-5 sigma keeps draws from crossing the clamp inside the stencil.
  const double h = 1e-5 * sigma;
  const double fd_sigma =
      (DeltaHat(c, sigma + h, schema, sample, p.adjacency) -
       DeltaHat(c, sigma - h, schema, sample, p.adjacency)) /
      (2.0 * h);
  EXPECT_LT(partials.d_sigma, 0.0);
  EXPECT_NEAR(partials.d_sigma, fd_sigma, 1e-4 * std::abs(fd_sigma));

  std::vector<double> fd(n);
  for (int d = 0; d < n; ++d) {
    std::vector<double> plus = c;
    std::vector<double> minus = c;
    plus[d] += 1e-6;
    minus[d] -= 1e-6;
    fd[d] = (DeltaHat(plus, sigma, schema, sample, p.adjacency) -
             DeltaHat(minus, sigma, schema, sample, p.adjacency)) /
            2e-6;
  }
  EXPECT_LT(RelativeError(partials.d_coeffs, fd), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(
    Schemas, DeltaHatPartialsTest,
    ::testing::Values(GradientCase{16, 1, Adjacency::kBoth},
                    GradientCase{4, 3, Adjacency::kAdd},
                    GradientCase{4, 3, Adjacency::kRemove},
                    GradientCase{3, 2, Adjacency::kBoth}));

TEST(DeltaHatPartialsTest, ZeroWhenNothingIsActive) {
  const ParticipationSchema schema = Schema(4, 1);
  ASSERT_OK_AND_ASSIGN(FullDimensionalSample sample,
                       DrawFullDimensionalSample(4, 4, 1000, 1));
  ASSERT_OK_AND_ASSIGN(DeltaPartials partials,
                       DeltaHatPartials(1e6, 1.0, std::vector<double>{1.0, 0.5, 0.2, 0.1},
                                        schema, sample));
  EXPECT_EQ(partials.estimate.delta_hat, 0.0);
  EXPECT_EQ(partials.d_sigma, 0.0);
  for (double g : partials.d_coeffs) EXPECT_EQ(g, 0.0);
}

TEST(DeltaHatPartialsTest, RejectsBadInput) {
  const ParticipationSchema schema = Schema(2, 1);
  ASSERT_OK_AND_ASSIGN(FullDimensionalSample sample,
                       DrawFullDimensionalSample(2, 2, 10, 1));
  EXPECT_STATUS_CODE(DeltaHatPartials(1.0, 0.0, std::vector<double>{1.0, 0.5}, schema, sample),
                     absl::StatusCode::kInvalidArgument);
  EXPECT_STATUS_CODE(DeltaHatPartials(1.0, 1.0, std::vector<double>{1.0}, schema, sample),
                     absl::StatusCode::kInvalidArgument);
  EXPECT_FALSE(
      DeltaHatPartials(1.0, 1.0, std::vector<double>{1.0, 0.5}, Schema(1, 2), sample).ok());
}

TEST(ImplicitSigmaGradientTest, ZeroPartialsGiveZero) {
  DeltaPartials partials{.d_sigma = -1.0, .d_coeffs = {0.0, 0.0, 0.0}};
  ASSERT_OK_AND_ASSIGN(std::vector<double> g,
                       ImplicitSigmaGradient(partials, 1e-5, 1.0));
  EXPECT_EQ(g, (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(ImplicitSigmaGradientTest, RejectsDegenerateConstraint) {
  DeltaPartials flat{.d_sigma = -1e-10, .d_coeffs = {1.0}};
  EXPECT_STATUS_CODE(ImplicitSigmaGradient(flat, 1e-5, 1.0),
                     absl::StatusCode::kFailedPrecondition);
  DeltaPartials rising{.d_sigma = 1.0, .d_coeffs = {1.0}};
  EXPECT_STATUS_CODE(ImplicitSigmaGradient(rising, 1e-5, 1.0),
                     absl::StatusCode::kFailedPrecondition);
}

TEST(ImplicitSigmaGradientTest, MatchesRecalibrationForTwoByTwo) {
  const ParticipationSchema schema = Schema(2, 1);
  ASSERT_OK_AND_ASSIGN(FullDimensionalSample sample,
                       DrawFullDimensionalSample(2, 2, 1 << 16, 3));
  const std::vector<double> c = {1.0, 0.4};
  const double sigma = SigmaStar(c, schema, sample);
  ASSERT_OK_AND_ASSIGN(DeltaPartials partials,
                       DeltaHatPartials(kEpsilon, sigma, c, schema, sample));
  ASSERT_OK_AND_ASSIGN(std::vector<double> grad,
                       ImplicitSigmaGradient(partials, kDeltaPrime, sigma));
  const double h = 1e-4;
  const double fd = (SigmaStar(std::vector<double>{1.0, 0.4 + h}, schema,
                               sample) -
                     SigmaStar(std::vector<double>{1.0, 0.4 - h}, schema,
                               sample)) /
                    (2.0 * h);
  EXPECT_NEAR(grad[1], fd, 1e-2 * std::abs(fd));
}

TEST(ImplicitSigmaGradientTest, ConsistentWithScaleCovariance) {
  // sigma*(gamma C) = gamma sigma*(C) implies sum_k c_k d sigma / d c_k =
  // sigma.
  const ParticipationSchema schema = Schema(8, 2);
  std::mt19937_64 rng(4);
  const std::vector<double> c = RandomFeasible(16, rng);
  ASSERT_OK_AND_ASSIGN(FullDimensionalSample sample,
                       DrawFullDimensionalSample(16, 8, 1 << 15, 5));
  const double sigma = SigmaStar(c, schema, sample);
  ASSERT_OK_AND_ASSIGN(DeltaPartials partials,
                       DeltaHatPartials(kEpsilon, sigma, c, schema, sample));
  ASSERT_OK_AND_ASSIGN(std::vector<double> grad,
                       ImplicitSigmaGradient(partials, kDeltaPrime, sigma));
  double directional = 0.0;
  for (int k = 0; k < 16; ++k) directional += c[k] * grad[k];
  EXPECT_NEAR(directional, sigma, 1e-8 * sigma);
  // And the calibration itself is scale covariant on the shared Z.
  std::vector<double> doubled = c;
  for (double& v : doubled) v *= 2.0;
  EXPECT_NEAR(SigmaStar(doubled, schema, sample), 2.0 * sigma, 1e-10 * sigma);
}

TEST(PrefixErrorNormGradientTest, MatchesFiniteDifferencesAtPrefixMatrix) {
  const int n = 12;
  const std::vector<double> ones(n, 1.0);
  ASSERT_OK_AND_ASSIGN(std::vector<double> grad,
                       PrefixErrorNormGradient(ones, n));
  std::vector<double> fd(n);
  for (int d = 0; d < n; ++d) {
    std::vector<double> plus = ones;
    std::vector<double> minus = ones;
    plus[d] += 1e-6;
    minus[d] -= 1e-6;
    fd[d] = (*PrefixErrorNormToeplitz(plus, n) -
             *PrefixErrorNormToeplitz(minus, n)) /
            2e-6;
  }
  EXPECT_LT(RelativeError(grad, fd), 1e-7);
}

TEST(RmseGradientTest, ZeroInputsGiveZero) {
  // With sigma = 0 and a zero sigma gradient both terms vanish.
  const std::vector<double> c = {1.0, 0.3, 0.1};
  ASSERT_OK_AND_ASSIGN(std::vector<double> g,
                       RmseGradient(c, 3, 0.0, std::vector<double>(3, 0.0)));
  EXPECT_EQ(g, std::vector<double>(3, 0.0));
  EXPECT_STATUS_CODE(RmseGradient(c, 3, 1.0, std::vector<double>(2, 0.0)),
                     absl::StatusCode::kInvalidArgument);
}

TEST(RmseGradientTest, EndToEndMatchesFiniteDifferences) {
  const ParticipationSchema schema = Schema(16, 1);
  std::mt19937_64 rng(8);
  for (int point = 0; point < 3; ++point) {
    const std::vector<double> c = RandomFeasible(16, rng);
    ASSERT_OK_AND_ASSIGN(FullDimensionalSample sample,
                         DrawFullDimensionalSample(16, 16, 1 << 14,
                                                   20 + point));
    auto objective = [&](std::span<const double> coeffs) {
      return SigmaStar(coeffs, schema, sample) *
             *PrefixErrorNormToeplitz(coeffs, 16);
    };
    const double sigma = SigmaStar(c, schema, sample);
    ASSERT_OK_AND_ASSIGN(DeltaPartials partials,
                         DeltaHatPartials(kEpsilon, sigma, c, schema, sample));
    ASSERT_OK_AND_ASSIGN(std::vector<double> d_sigma,
                         ImplicitSigmaGradient(partials, kDeltaPrime, sigma));
    ASSERT_OK_AND_ASSIGN(std::vector<double> grad,
                         RmseGradient(c, 16, sigma, d_sigma));
    std::vector<double> fd(16);
    for (int d = 0; d < 16; ++d) {
      std::vector<double> plus = c;
      std::vector<double> minus = c;
      plus[d] += 1e-6;
      minus[d] -= 1e-6;
      fd[d] = (objective(plus) - objective(minus)) / 2e-6;
    }
    EXPECT_LT(RelativeError(grad, fd), 1e-3) << "point " << point;
  }
}

TEST(StrategyParameterizationTest, ToeplitzDefaultsAndProjection) {
  const StrategyParameterization p = StrategyParameterization::Toeplitz(4);
  EXPECT_EQ(p.num_params(), 3);
  EXPECT_EQ(p.Coefficients(p.DefaultInitialization()),
            (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
  EXPECT_EQ(p.Project(std::vector<double>{-0.5, 0.2, -1e-9}),
            (std::vector<double>{0.0, 0.2, 0.0}));
  EXPECT_EQ(p.PullBack({}, std::vector<double>{9.0, 1.0, 2.0, 3.0}),
            (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_FALSE(p.CheckParams(std::vector<double>{0.1}).ok());
}

TEST(StrategyParameterizationTest, BltDefaultsAndProjection) {
  const StrategyParameterization p = StrategyParameterization::Blt(10, 3);
  EXPECT_EQ(p.num_params(), 6);
  const std::vector<double> init = p.DefaultInitialization();
  EXPECT_EQ(init[0], 0.1);
  EXPECT_DOUBLE_EQ(init[3], 0.45);
  EXPECT_DOUBLE_EQ(init[5], 0.75);
  const std::vector<double> projected =
      p.Project(std::vector<double>{-1.0, 0.2, 0.3, 0.0, 1.5, 0.5});
  EXPECT_EQ(projected,
            (std::vector<double>{0.0, 0.2, 0.3, 1e-3, 1.0 - 1e-3, 0.5}));
  ASSERT_OK_AND_ASSIGN(StrategyMatrix s, p.ToStrategy(projected));
  EXPECT_EQ(s.family(), StrategyFamily::kBlt);
}

TEST(StrategyParameterizationTest, BltPullBackMatchesFiniteDifferences) {
  const StrategyParameterization p = StrategyParameterization::Blt(20, 2);
  const std::vector<double> params = {0.3, 0.1, 0.5, 0.85};
  std::vector<double> upstream(20);
  for (int k = 0; k < 20; ++k) upstream[k] = std::sin(1.0 + k);
  const std::vector<double> grad = p.PullBack(params, upstream);
  for (int q = 0; q < 4; ++q) {
    std::vector<double> plus = params;
    std::vector<double> minus = params;
    plus[q] += 1e-6;
    minus[q] -= 1e-6;
    const std::vector<double> cp = p.Coefficients(plus);
    const std::vector<double> cm = p.Coefficients(minus);
    double fd = 0.0;
    for (int k = 0; k < 20; ++k) fd += upstream[k] * (cp[k] - cm[k]) / 2e-6;
    EXPECT_NEAR(grad[q], fd, 1e-7 * std::max(1.0, std::abs(fd))) << q;
  }
}

TEST(SolveSigmaOnSampleTest, AgreesWithBisection) {
  const ModeSet modes =
      *ModeVectors(StrategyMatrix::Identity(8), Schema(4, 2));
  ASSERT_OK_AND_ASSIGN(PldBaseSample base, DrawBaseSample(modes, 100000, 2));
  ASSERT_OK_AND_ASSIGN(double sigma,
                       SolveSigmaOnSample(1.0, 1e-4, base, modes.gram, 0.1,
                                          1.0, Adjacency::kBoth));
  ASSERT_OK_AND_ASSIGN(CalibrationResult bisection,
                       CalibrateSigmaOnSample(1.0, 1e-4, base, modes.gram,
                                              0.01, 10.0));
  EXPECT_NEAR(sigma, bisection.sigma, 2e-4 * sigma);
  ASSERT_OK_AND_ASSIGN(EstimatorResult at,
                       EstimateDelta(1.0, sigma, base, modes.gram,
                                     Adjacency::kBoth));
  EXPECT_LE(at.delta_hat, 1e-4);
  EXPECT_STATUS_CODE(SolveSigmaOnSample(1.0, 1e-4, base, modes.gram, 1.0, 0.5,
                                        Adjacency::kBoth),
                     absl::StatusCode::kInvalidArgument);
}

OptimizerConfig SmallConfig() {
  OptimizerConfig config;
  config.batches_per_epoch = 16;
  config.epochs = 1;
  config.steps = 15;
  config.samples_per_step = 1 << 12;
  config.final_sample_count = 1 << 16;
  config.seed = 3;
  return config;
}

TEST(OptimizeTest, ZeroStepsReturnsCalibratedInitialization) {
  OptimizerConfig config = SmallConfig();
  config.steps = 0;
  ASSERT_OK_AND_ASSIGN(OptimizationResult result, Optimize(config));
  EXPECT_EQ(result.params, std::vector<double>(15, 0.0));
  EXPECT_TRUE(result.trace.steps.empty());
  ASSERT_OK_AND_ASSIGN(double rmse,
                       Rmse(StrategyMatrix::Identity(16), result.sigma));
  EXPECT_DOUBLE_EQ(result.rmse, rmse);
  EXPECT_LT(result.sigma, result.final_calibration.sigma_max);
}

TEST(OptimizeTest, ToeplitzImprovesOnIdentity) {
  OptimizerConfig config = SmallConfig();
  ASSERT_OK_AND_ASSIGN(OptimizationResult optimized, Optimize(config));
  config.steps = 0;
  ASSERT_OK_AND_ASSIGN(OptimizationResult identity, Optimize(config));
  // Same final seed, so the comparison uses common random numbers.
  EXPECT_LE(optimized.rmse, identity.rmse);
  int accepted = 0;
  for (const StepRecord& r : optimized.trace.steps) {
    if (r.accepted) {
      ++accepted;
      EXPECT_LT(r.candidate_rmse, r.rmse);
    } else {
      EXPECT_EQ(r.candidate_rmse, r.rmse);
    }
  }
  EXPECT_GT(accepted, 0);
  for (double c : optimized.params) EXPECT_GE(c, 0.0);
  EXPECT_EQ(optimized.trace.final_rmse, optimized.rmse);
  EXPECT_EQ(optimized.trace.final_sigma, optimized.sigma);
}

TEST(OptimizeTest, Deterministic) {
  OptimizerConfig config = SmallConfig();
  config.steps = 4;
  ASSERT_OK_AND_ASSIGN(OptimizationResult a, Optimize(config));
  ASSERT_OK_AND_ASSIGN(OptimizationResult b, Optimize(config));
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_EQ(TraceToJson(a.trace).dump(), TraceToJson(b.trace).dump());
}

TEST(OptimizeTest, BltStaysFeasibleWithSixParameters) {
  OptimizerConfig config = SmallConfig();
  config.family = OptimizerFamily::kBlt;
  config.buffers = 3;
  config.steps = 6;
  config.learning_rate = 1e-2;
  ASSERT_OK_AND_ASSIGN(OptimizationResult result, Optimize(config));
  ASSERT_EQ(result.params.size(), 6u);
  for (int m = 0; m < 3; ++m) {
    EXPECT_GE(result.params[m], 0.0);
    EXPECT_GE(result.params[3 + m], 1e-3);
    EXPECT_LE(result.params[3 + m], 1.0 - 1e-3);
  }
  EXPECT_EQ(result.strategy.family(), StrategyFamily::kBlt);
}

TEST(OptimizeTest, FixedSampleMode) {
  OptimizerConfig config = SmallConfig();
  config.steps = 5;
  config.resample_each_step = false;
  ASSERT_OK_AND_ASSIGN(OptimizationResult result, Optimize(config));
  // With one sample set the accepted objectives form a decreasing chain.
  double previous = result.trace.initial_rmse;
  for (const StepRecord& r : result.trace.steps) {
    EXPECT_EQ(r.rmse, previous);
    previous = r.candidate_rmse;
  }
}

TEST(OptimizerConfigTest, JsonRoundTripAndValidation) {
  OptimizerConfig config = SmallConfig();
  config.family = OptimizerFamily::kBlt;
  config.initial_params = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  ASSERT_OK_AND_ASSIGN(OptimizerConfig back,
                       OptimizerConfigFromJson(OptimizerConfigToJson(config)));
  EXPECT_EQ(OptimizerConfigToJson(back), OptimizerConfigToJson(config));

  EXPECT_FALSE(OptimizerConfigFromJson({{"family", "dense"}}).ok());
  EXPECT_FALSE(OptimizerConfigFromJson({{"samples_per_step", 10},
                                        {"final_sample_count", 5}})
                   .ok());
  EXPECT_FALSE(OptimizerConfigFromJson({{"steps", "many"}}).ok());
  EXPECT_FALSE(OptimizerConfigFromJson(nlohmann::json::array()).ok());
  config.initial_params = {0.1};
  EXPECT_FALSE(Optimize(config).ok());
}

}  // namespace
}  // namespace corrdp
