// Copyright 2026 The dprel Authors
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

#ifndef DPREL_RR_BASELINE_H_
#define DPREL_RR_BASELINE_H_

#include <cstdint>
#include <vector>

#include "absl/status/statusor.h"
#include "dprel/graph_store.h"

namespace dprel {

inline constexpr int kRrMaxEntities = 5000;

// 1 / (1 + e^epsilon); 1/2 at epsilon = 0 and 0 as epsilon -> infinity.
double FlipProbability(double epsilon);

struct RrOptions {
  // Permits graphs above kRrMaxEntities despite the N^2 pair enumeration.
  bool allow_large = false;
};

// Number of unordered pairs N (N - 1) / 2 the mechanism enumerates.
int64_t PairCount(int num_entities);

// epsilon-DP randomized response on the full pair space: every unordered
// pair's membership bit is flipped independently with FlipProbability(eps).
// Returns the perturbed relation set in canonical order.
absl::StatusOr<std::vector<Relation>> RandomizedResponse(
    const TextAttributedGraph& graph, double epsilon, uint64_t seed,
    const RrOptions& options = {});

}  // namespace dprel

#endif  // DPREL_RR_BASELINE_H_
