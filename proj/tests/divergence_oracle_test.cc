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

#include <cmath>

#include "corrdp/gaussian_mechanism.h"
#include "gtest/gtest.h"
#include "status_matchers.h"

namespace corrdp {
namespace {

TEST(HockeyStickQuadratureTest, ZeroAlphaIsTotalMass) {
  Eigen::MatrixXd modes(3, 2);
  modes << 1.0, 0.2, 0.5, 1.0, 0.0, 0.3;
  ASSERT_OK_AND_ASSIGN(LowDimPair pair, LowDimPair::Uniform(modes, 0.8));
  ASSERT_OK_AND_ASSIGN(double h, HockeyStickQuadrature(pair, 0.0));
  EXPECT_NEAR(h, 1.0, 1e-8);
}

TEST(HockeyStickQuadratureTest, IdenticalDistributionsGiveZero) {
  ASSERT_OK_AND_ASSIGN(LowDimPair pair,
                       LowDimPair::Uniform(Eigen::MatrixXd::Zero(3, 2), 1.0));
  EXPECT_EQ(pair.effective_dim(), 0);
  ASSERT_OK_AND_ASSIGN(double h, HockeyStickQuadrature(pair, 1.0));
  EXPECT_EQ(h, 0.0);
}

TEST(HockeyStickQuadratureTest, SingleModeMatchesGaussianMechanism) {
  Eigen::MatrixXd modes(2, 1);
  modes << 0.6, 0.8;  // unit norm, not axis aligned
  ASSERT_OK_AND_ASSIGN(LowDimPair pair, LowDimPair::Uniform(modes, 1.0));
  EXPECT_EQ(pair.effective_dim(), 1);
  ASSERT_OK_AND_ASSIGN(double h, HockeyStickQuadrature(pair, std::exp(1.0)));
  EXPECT_NEAR(h, 0.12693673750664392, 1e-6);
  EXPECT_NEAR(h, AnalyticDelta(1.0, {.sensitivity = 1.0, .sigma = 1.0}),
              1e-8);
}

TEST(HockeyStickQuadratureTest, OrthonormalTwoModeMatchesReference) {
  // Reference from an independent scipy implementation (closed-form inner
  // integral, adaptive outer quadrature).
  ASSERT_OK_AND_ASSIGN(
      LowDimPair pair, LowDimPair::Uniform(Eigen::MatrixXd::Identity(2, 2), 1.0));
  ASSERT_OK_AND_ASSIGN(double h, HockeyStickQuadrature(pair, std::exp(0.5)));
  EXPECT_NEAR(h, 0.14917752313552016, 1e-9);
}

TEST(HockeyStickQuadratureTest, NonincreasingInAlphaAndBounded) {
  Eigen::MatrixXd modes(3, 3);
  modes << 1.0, 0.0, 0.4, 0.3, 1.2, 0.0, 0.0, 0.5, 0.9;
  ASSERT_OK_AND_ASSIGN(LowDimPair pair, LowDimPair::Uniform(modes, 1.0));
  EXPECT_EQ(pair.effective_dim(), 3);
  double previous = 1.0;
  for (double alpha : {0.5, 1.0, 1.5, 2.5, 4.0}) {
    ASSERT_OK_AND_ASSIGN(double h, HockeyStickQuadrature(pair, alpha));
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, previous + 1e-9) << "alpha " << alpha;
    previous = h;
  }
}

TEST(HockeyStickQuadratureTest, RejectsLargeSpan) {
  EXPECT_STATUS_CODE(
      LowDimPair::Uniform(Eigen::MatrixXd::Identity(5, 5), 1.0),
      absl::StatusCode::kInvalidArgument);
}

TEST(AdaptivityCounterexampleTest, MatchesReferenceValues) {
  // Independent scipy values at alpha = e^0.5.
  struct Case {
    double sigma, opposite, same;
  };
  for (const Case& c : {Case{0.5, 0.6609910868267512, 0.6027994019462253},
                        Case{1.0, 0.2875844946100658, 0.17971989146487993},
                        Case{2.0, 0.07279550918540593, 0.01956244686613824}}) {
    ASSERT_OK_AND_ASSIGN(auto values,
                         AdaptivityCounterexampleCheck(c.sigma, std::exp(0.5)));
    EXPECT_NEAR(values.first, c.opposite, 1e-8);
    EXPECT_NEAR(values.second, c.same, 1e-8);
    EXPECT_GT(values.first, values.second);
  }
}

TEST(AdaptivityCounterexampleTest, ZeroAlphaGivesTotalMass) {
  ASSERT_OK_AND_ASSIGN(auto values, AdaptivityCounterexampleCheck(1.0, 0.0));
  EXPECT_NEAR(values.first, 1.0, 1e-8);
  EXPECT_NEAR(values.second, 1.0, 1e-8);
}

TEST(AdaptivityCounterexampleTest, LargeSigmaApproachesNoSignal) {
  ASSERT_OK_AND_ASSIGN(auto values, AdaptivityCounterexampleCheck(200.0, 0.5));
  EXPECT_NEAR(values.first, 0.5, 1e-3);
  EXPECT_NEAR(values.second, 0.5, 1e-3);
}

}  // namespace
}  // namespace corrdp
