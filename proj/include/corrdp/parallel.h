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

// Deterministic chunked map-reduce. Work is split into fixed-size chunks whose
// results are combined in a fixed pairwise tree, so the outcome depends only
// on the chunk size and never on how many workers ran.

#ifndef CORRDP_PARALLEL_H_
#define CORRDP_PARALLEL_H_

#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace corrdp {

inline constexpr int64_t kSampleChunkSize = int64_t{1} << 14;

// Caps the number of worker threads; 0 restores the hardware default.
void SetWorkerCount(int workers);
int WorkerCount();

// Runs fn(chunk) for every chunk in [0, num_chunks).
void ParallelFor(int64_t num_chunks, const std::function<void(int64_t)>& fn);

template <typename T, typename Combine>
T PairwiseReduce(std::vector<T> values, Combine combine) {
  if (values.empty()) return T{};
  while (values.size() > 1) {
    std::vector<T> next;
    next.reserve((values.size() + 1) / 2);
    for (size_t i = 0; i + 1 < values.size(); i += 2) {
      next.push_back(combine(values[i], values[i + 1]));
    }
    if (values.size() % 2 == 1) next.push_back(std::move(values.back()));
    values = std::move(next);
  }
  return std::move(values.front());
}

// Seed of the independent RNG stream `stream` under master `seed`.
uint64_t StreamSeed(uint64_t seed, uint64_t stream);

using Rng = std::mt19937_64;

inline Rng MakeStreamRng(uint64_t seed, uint64_t stream) {
  return Rng(StreamSeed(seed, stream));
}

}  // namespace corrdp

#endif  // CORRDP_PARALLEL_H_
