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

#include "corrdp/batching.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "gtest/gtest.h"
#include "status_matchers.h"

namespace corrdp {
namespace {

double ChiSquaredPValue(double statistic, double dof) {
  return boost::math::cdf(
      boost::math::complement(boost::math::chi_squared(dof), statistic));
}

// One-sample Kolmogorov-Smirnov p-value against U(0, 1), using the
// asymptotic distribution with Stephens' finite-n correction.
double UniformKsPValue(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    d = std::max({d, (i + 1) / n - values[i], values[i] - i / n});
  }
  const double x = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * x * x);
  }
  return std::clamp(p, 0.0, 1.0);
}

void ExpectPartition(const AssignmentPlan& plan) {
  ASSERT_EQ(static_cast<int64_t>(plan.assignment.size()), plan.dataset_size);
  ASSERT_EQ(static_cast<int64_t>(plan.order.size()), plan.dataset_size);
  int64_t total = 0;
  for (int64_t c : plan.counts) total += c;
  EXPECT_EQ(total, plan.dataset_size);
  std::vector<int> seen(plan.dataset_size, 0);
  for (int b = 0; b < plan.batches; ++b) {
    for (int64_t k : plan.Batch(b)) {
      ASSERT_GE(k, 0);
      ASSERT_LT(k, plan.dataset_size);
      ++seen[k];
      EXPECT_EQ(plan.assignment[k], b);
    }
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(AssignTest, SingleBatchHoldsEverything) {
  ASSERT_OK_AND_ASSIGN(AssignmentPlan plan, Assign(37, 1, 5));
  EXPECT_EQ(plan.counts, std::vector<int64_t>{37});
  for (int32_t b : plan.assignment) EXPECT_EQ(b, 0);
}

TEST(AssignTest, EmptyDataset) {
  ASSERT_OK_AND_ASSIGN(AssignmentPlan plan, Assign(0, 4, 5));
  EXPECT_EQ(plan.counts, std::vector<int64_t>(4, 0));
  EXPECT_TRUE(plan.assignment.empty());
}

TEST(AssignTest, RejectsInvalidSizes) {
  EXPECT_STATUS_CODE(Assign(10, 0, 1), absl::StatusCode::kInvalidArgument);
  EXPECT_STATUS_CODE(AssignDirect(10, 0, 1),
                     absl::StatusCode::kInvalidArgument);
  EXPECT_STATUS_CODE(Assign(-1, 2, 1), absl::StatusCode::kInvalidArgument);
}

TEST(AssignTest, DeterministicInSeed) {
  ASSERT_OK_AND_ASSIGN(AssignmentPlan a, Assign(1000, 7, 9));
  ASSERT_OK_AND_ASSIGN(AssignmentPlan b, Assign(1000, 7, 9));
  ASSERT_OK_AND_ASSIGN(AssignmentPlan c, Assign(1000, 7, 10));
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_NE(a.assignment, c.assignment);
}

TEST(AssignTest, PartitionForManySeeds) {
  for (uint64_t seed = 0; seed < 200; ++seed) {
    const int64_t n = static_cast<int64_t>(seed % 50);
    const int b = 1 + static_cast<int>(seed % 9);
    ASSERT_OK_AND_ASSIGN(AssignmentPlan plan, Assign(n, b, seed));
    ExpectPartition(plan);
    ASSERT_OK_AND_ASSIGN(AssignmentPlan direct, AssignDirect(n, b, seed));
    ExpectPartition(direct);
    ASSERT_OK_AND_ASSIGN(AssignmentPlan fixed, AssignShuffleFixed(n, b, seed));
    ExpectPartition(fixed);
    const auto [lo, hi] =
        std::minmax_element(fixed.counts.begin(), fixed.counts.end());
    EXPECT_LE(*hi - *lo, 1);
  }
}

TEST(AssignTest, CountsPassGoodnessOfFit) {
  const int64_t n = 100000;
  const int b = 10;
  std::vector<double> p_values;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    ASSERT_OK_AND_ASSIGN(AssignmentPlan plan, Assign(n, b, 1000 + seed));
    const double expected = static_cast<double>(n) / b;
    double chi2 = 0.0;
    for (int64_t c : plan.counts) {
      chi2 += (c - expected) * (c - expected) / expected;
    }
    const double p = ChiSquaredPValue(chi2, b - 1);
    // Family-wise level 1e-3 over 100 seeds.
    EXPECT_GT(p, 1e-5) << "seed " << seed;
    p_values.push_back(p);
  }
  EXPECT_GT(UniformKsPValue(p_values), 0.01);
}

TEST(AssignTest, MarginalBatchIsUniform) {
  const int b = 4;
  const int trials = 10000;
  std::vector<int> hits(b, 0);
  for (int seed = 0; seed < trials; ++seed) {
    ASSERT_OK_AND_ASSIGN(AssignmentPlan plan, Assign(25, b, seed));
    ++hits[plan.assignment[7]];
  }
  const double p = 1.0 / b;
  for (int h : hits) {
    EXPECT_NEAR(static_cast<double>(h) / trials, p,
                4.0 * std::sqrt(p * (1 - p) / trials));
  }
}

TEST(AssignTest, MatchesDirectCountDistribution) {
  const int64_t n = 20;
  const int b = 3;
  const int draws = 10000;
  std::map<int64_t, std::pair<int, int>> histogram;
  for (int seed = 0; seed < draws; ++seed) {
    ASSERT_OK_AND_ASSIGN(AssignmentPlan a, Assign(n, b, seed));
    ASSERT_OK_AND_ASSIGN(AssignmentPlan d, AssignDirect(n, b, draws + seed));
    for (int i = 0; i < b; ++i) {
      ++histogram[a.counts[i]].first;
      ++histogram[d.counts[i]].second;
    }
  }
  // Two-sample chi-squared on the batch-size histograms; sparse tails are
  // pooled so every cell has at least 10 observations in total.
  std::vector<std::pair<int, int>> cells;
  std::pair<int, int> pool{0, 0};
  for (const auto& [count, pair] : histogram) {
    pool.first += pair.first;
    pool.second += pair.second;
    if (pool.first + pool.second >= 10) {
      cells.push_back(pool);
      pool = {0, 0};
    }
  }
  if (pool.first + pool.second > 0) {
    cells.back().first += pool.first;
    cells.back().second += pool.second;
  }
  const double total_a = static_cast<double>(draws) * b;
  const double total_d = total_a;
  double chi2 = 0.0;
  for (const auto& [x, y] : cells) {
    const double row = x + y;
    const double ea = row * total_a / (total_a + total_d);
    const double ed = row * total_d / (total_a + total_d);
    chi2 += (x - ea) * (x - ea) / ea + (y - ed) * (y - ed) / ed;
  }
  EXPECT_GT(ChiSquaredPValue(chi2, static_cast<double>(cells.size()) - 1),
            0.01);
}

TEST(ScheduleTest, RoundRobinOneBased) {
  EXPECT_EQ(*Schedule(1, 3), 1);
  EXPECT_EQ(*Schedule(3, 3), 3);
  EXPECT_EQ(*Schedule(4, 3), 1);
  EXPECT_EQ(*Schedule(6, 3), 3);
  EXPECT_EQ(*Schedule(7, 1), 1);
  EXPECT_STATUS_CODE(Schedule(0, 3), absl::StatusCode::kInvalidArgument);
}

TEST(PadTruncateTest, Examples) {
  const std::vector<int64_t> exact = {4, 2, 9, 7};
  ASSERT_OK_AND_ASSIGN(PracticalBatch same, PadTruncate(exact, 4));
  EXPECT_EQ(same.example_indices, exact);
  EXPECT_EQ(same.pad_count(), 0);
  EXPECT_EQ(same.truncated_count, 0);

  ASSERT_OK_AND_ASSIGN(PracticalBatch empty, PadTruncate({}, 4));
  EXPECT_EQ(empty.example_indices, std::vector<int64_t>(4, kPadSentinel));
  EXPECT_EQ(empty.real_count, 0);
  EXPECT_EQ(empty.pad_count(), 4);

  const std::vector<int64_t> long_batch = {1, 2, 3, 4, 5, 6, 7};
  ASSERT_OK_AND_ASSIGN(PracticalBatch cut, PadTruncate(long_batch, 4));
  EXPECT_EQ(cut.example_indices, (std::vector<int64_t>{1, 2, 3, 4}));
  EXPECT_EQ(cut.truncated_count, 3);

  const std::vector<int64_t> short_batch = {8};
  ASSERT_OK_AND_ASSIGN(PracticalBatch padded, PadTruncate(short_batch, 3));
  EXPECT_EQ(padded.example_indices,
            (std::vector<int64_t>{8, kPadSentinel, kPadSentinel}));
  EXPECT_STATUS_CODE(PadTruncate(short_batch, 0),
                     absl::StatusCode::kInvalidArgument);
}

TEST(PadTruncateTest, KeepsOneParticipationPerEpoch) {
  ASSERT_OK_AND_ASSIGN(AssignmentPlan plan, Assign(103, 5, 4));
  std::set<int64_t> used;
  for (int b = 0; b < plan.batches; ++b) {
    ASSERT_OK_AND_ASSIGN(PracticalBatch batch, PadTruncate(plan.Batch(b), 20));
    EXPECT_EQ(batch.example_indices.size(), 20u);
    EXPECT_EQ(batch.real_count + batch.pad_count(), 20);
    for (int64_t k : batch.example_indices) {
      if (k == kPadSentinel) continue;
      EXPECT_TRUE(used.insert(k).second) << "example " << k << " reused";
    }
  }
}

TEST(PlanJsonTest, RoundTripRegeneratesAssignment) {
  ASSERT_OK_AND_ASSIGN(AssignmentPlan plan, Assign(500, 6, 77));
  const nlohmann::json json = PlanToJson(plan);
  EXPECT_FALSE(json.contains("assignment"));
  ASSERT_OK_AND_ASSIGN(AssignmentPlan back,
                       PlanFromJson(nlohmann::json::parse(json.dump())));
  EXPECT_EQ(back.assignment, plan.assignment);
  EXPECT_EQ(back.order, plan.order);

  nlohmann::json tampered = json;
  tampered["counts"][0] = tampered["counts"][0].get<int64_t>() + 1;
  EXPECT_STATUS_CODE(PlanFromJson(tampered), absl::StatusCode::kDataLoss);
  EXPECT_STATUS_CODE(PlanFromJson({{"batches", 2}}),
                     absl::StatusCode::kInvalidArgument);
}

}  // namespace
}  // namespace corrdp
