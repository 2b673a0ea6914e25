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
#include <numeric>
#include <random>

#include "absl/strings/str_cat.h"
#include "corrdp/parallel.h"

namespace corrdp {
namespace {

absl::Status CheckSizes(int64_t dataset_size, int batches) {
  if (batches < 1) return absl::InvalidArgumentError("need at least 1 batch");
  if (dataset_size < 0) {
    return absl::InvalidArgumentError("dataset_size must be >= 0");
  }
  return absl::OkStatus();
}

AssignmentPlan EmptyPlan(int64_t dataset_size, int batches, uint64_t seed) {
  AssignmentPlan plan;
  plan.dataset_size = dataset_size;
  plan.batches = batches;
  plan.seed = seed;
  return plan;
}

// Per-batch counts from the assignment.
void GroupByBatch(AssignmentPlan& plan) {
  plan.counts.assign(plan.batches, 0);
  for (int32_t b : plan.assignment) ++plan.counts[b];
}

void FillFromOrderAndCounts(AssignmentPlan& plan) {
  plan.assignment.assign(plan.dataset_size, 0);
  int64_t offset = 0;
  for (int b = 0; b < plan.batches; ++b) {
    for (int64_t k = 0; k < plan.counts[b]; ++k) {
      plan.assignment[plan.order[offset + k]] = b;
    }
    offset += plan.counts[b];
  }
}

std::vector<int64_t> ShuffledIndices(int64_t n, Rng& rng) {
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), int64_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

std::span<const int64_t> AssignmentPlan::Batch(int i) const {
  int64_t offset = 0;
  for (int b = 0; b < i; ++b) offset += counts[b];
  return {order.data() + offset, static_cast<size_t>(counts[i])};
}

absl::StatusOr<AssignmentPlan> Assign(int64_t dataset_size, int batches,
                                      uint64_t seed) {
  if (absl::Status s = CheckSizes(dataset_size, batches); !s.ok()) return s;
  AssignmentPlan plan = EmptyPlan(dataset_size, batches, seed);
  Rng rng = MakeStreamRng(seed, 0);
  plan.order = ShuffledIndices(dataset_size, rng);
  plan.counts.assign(batches, 0);
  int64_t remaining = dataset_size;
  for (int b = 0; b + 1 < batches && remaining > 0; ++b) {
    std::binomial_distribution<int64_t> draw(remaining, 1.0 / (batches - b));
    plan.counts[b] = draw(rng);
    remaining -= plan.counts[b];
  }
  plan.counts[batches - 1] += remaining;
  FillFromOrderAndCounts(plan);
  return plan;
}

absl::StatusOr<AssignmentPlan> AssignDirect(int64_t dataset_size, int batches,
                                            uint64_t seed) {
  if (absl::Status s = CheckSizes(dataset_size, batches); !s.ok()) return s;
  AssignmentPlan plan = EmptyPlan(dataset_size, batches, seed);
  Rng rng = MakeStreamRng(seed, 0);
  std::uniform_int_distribution<int32_t> pick(0, batches - 1);
  plan.assignment.resize(dataset_size);
  for (int32_t& b : plan.assignment) b = pick(rng);
  GroupByBatch(plan);
  std::vector<std::vector<int64_t>> members(batches);
  for (int64_t k = 0; k < dataset_size; ++k) {
    members[plan.assignment[k]].push_back(k);
  }
  for (const std::vector<int64_t>& m : members) {
    plan.order.insert(plan.order.end(), m.begin(), m.end());
  }
  return plan;
}

absl::StatusOr<AssignmentPlan> AssignShuffleFixed(int64_t dataset_size,
                                                  int batches, uint64_t seed) {
  if (absl::Status s = CheckSizes(dataset_size, batches); !s.ok()) return s;
  AssignmentPlan plan = EmptyPlan(dataset_size, batches, seed);
  Rng rng = MakeStreamRng(seed, 0);
  plan.order = ShuffledIndices(dataset_size, rng);
  plan.counts.assign(batches, dataset_size / batches);
  for (int64_t b = 0; b < dataset_size % batches; ++b) ++plan.counts[b];
  FillFromOrderAndCounts(plan);
  return plan;
}

absl::StatusOr<int> Schedule(int64_t iteration, int batches) {
  if (iteration < 1) return absl::InvalidArgumentError("iteration must be >= 1");
  if (batches < 1) return absl::InvalidArgumentError("need at least 1 batch");
  return static_cast<int>((iteration - 1) % batches) + 1;
}

absl::StatusOr<PracticalBatch> PadTruncate(std::span<const int64_t> batch,
                                           int64_t batch_size) {
  if (batch_size < 1) return absl::InvalidArgumentError("B must be >= 1");
  PracticalBatch out;
  const int64_t size = static_cast<int64_t>(batch.size());
  out.real_count = std::min(size, batch_size);
  out.truncated_count = size - out.real_count;
  out.example_indices.assign(batch.begin(), batch.begin() + out.real_count);
  out.example_indices.resize(batch_size, kPadSentinel);
  return out;
}

nlohmann::json PlanToJson(const AssignmentPlan& plan) {
  return {{"dataset_size", plan.dataset_size},
          {"batches", plan.batches},
          {"seed", plan.seed},
          {"counts", plan.counts}};
}

absl::StatusOr<AssignmentPlan> PlanFromJson(const nlohmann::json& json) {
  int64_t dataset_size = 0;
  int batches = 0;
  uint64_t seed = 0;
  std::vector<int64_t> counts;
  try {
    dataset_size = json.at("dataset_size").get<int64_t>();
    batches = json.at("batches").get<int>();
    seed = json.at("seed").get<uint64_t>();
    counts = json.at("counts").get<std::vector<int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("bad plan: ", e.what()));
  }
  absl::StatusOr<AssignmentPlan> plan = Assign(dataset_size, batches, seed);
  if (!plan.ok()) return plan.status();
  if (plan->counts != counts) {
    return absl::DataLossError("stored counts do not match the seed");
  }
  return plan;
}

}  // namespace corrdp
