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

#include "dprel/rr_baseline.h"

#include <cmath>
#include <limits>
#include <random>

#include "absl/strings/str_cat.h"
#include "dprel/rng.h"

namespace dprel {

double FlipProbability(double epsilon) {
  if (std::isinf(epsilon) && epsilon > 0) return 0.0;
  return 1.0 / (1.0 + std::exp(epsilon));
}

int64_t PairCount(int num_entities) {
  const auto n = static_cast<int64_t>(num_entities);
  return n * (n - 1) / 2;
}

absl::StatusOr<std::vector<Relation>> RandomizedResponse(
    const TextAttributedGraph& graph, double epsilon, uint64_t seed,
    const RrOptions& options) {
  if (!(epsilon >= 0.0)) {
    return absl::InvalidArgumentError("epsilon must be non-negative");
  }
  const int n = graph.num_entities();
  if (n > kRrMaxEntities && !options.allow_large) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "randomized response enumerates ", PairCount(n), " pairs for ", n,
        " entities; pass allow_large to proceed"));
  }
  const double p = FlipProbability(epsilon);
  Rng rng = MakeRng(seed, "rr");
  std::vector<Relation> out;
  auto existing = graph.relations().begin();
  const auto end = graph.relations().end();
  for (EntityId u = 0; u < n; ++u) {
    for (EntityId v = u + 1; v < n; ++v) {
      const Relation pair{u, v};
      while (existing != end && *existing < pair) ++existing;
      const bool member = existing != end && *existing == pair;
      const bool flip = UnitInterval(rng()) < p;
      if (member != flip) out.push_back(pair);
    }
  }
  return out;
}

}  // namespace dprel
