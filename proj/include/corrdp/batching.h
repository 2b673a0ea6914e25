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

// Balls-in-bins batch assignment, the round-robin schedule and the fixed
// batch size adaptation (pad with a zero-gradient sentinel, or truncate).

#ifndef CORRDP_BATCHING_H_
#define CORRDP_BATCHING_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "json.hpp"

namespace corrdp {

// Example index standing for a zero-gradient pad slot.
inline constexpr int64_t kPadSentinel = -1;

struct AssignmentPlan {
  int64_t dataset_size = 0;
  int batches = 0;
  uint64_t seed = 0;
  // counts[i] examples in batch i (0-based).
  std::vector<int64_t> counts;
  // Batch of each example (0-based).
  std::vector<int32_t> assignment;
  // Examples grouped by batch, batch 0 first, in shuffle order within each
  // batch.
  std::vector<int64_t> order;

  // Examples of batch i in shuffle order.
  std::span<const int64_t> Batch(int i) const;
};

// One shuffle of the dataset followed by multinomial counts drawn as
// sequential binomials; the first counts[0] shuffled examples form batch 0
// and so on. Equal in law to an independent uniform batch per example.
absl::StatusOr<AssignmentPlan> Assign(int64_t dataset_size, int batches,
                                      uint64_t seed);

// Reference implementation: an independent uniform draw per example.
absl::StatusOr<AssignmentPlan> AssignDirect(int64_t dataset_size, int batches,
                                            uint64_t seed);

// Shuffle once and cut into batches whose sizes differ by at most one.
absl::StatusOr<AssignmentPlan> AssignShuffleFixed(int64_t dataset_size,
                                                  int batches, uint64_t seed);

// Batch used at 1-based iteration i: ((i - 1) mod b) + 1, so that b maps to
// b rather than 0.
absl::StatusOr<int> Schedule(int64_t iteration, int batches);

struct PracticalBatch {
  // Exactly B entries; kPadSentinel marks padding.
  std::vector<int64_t> example_indices;
  int64_t real_count = 0;
  int64_t truncated_count = 0;

  int64_t pad_count() const {
    return static_cast<int64_t>(example_indices.size()) - real_count;
  }
};

// Pads with kPadSentinel up to B, or keeps the first B entries.
absl::StatusOr<PracticalBatch> PadTruncate(std::span<const int64_t> batch,
                                           int64_t batch_size);

// {dataset_size, batches, seed, counts}; the assignment is regenerated from
// the seed on load and checked against the stored counts.
nlohmann::json PlanToJson(const AssignmentPlan& plan);
absl::StatusOr<AssignmentPlan> PlanFromJson(const nlohmann::json& json);

}  // namespace corrdp

#endif  // CORRDP_BATCHING_H_
