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

#ifndef DPREL_SAMPLER_H_
#define DPREL_SAMPLER_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "dprel/graph_store.h"

namespace dprel {

// One positive relation plus its negatives (anchor, v_j). The anchor is the
// smaller endpoint of the positive.
struct RelationTuple {
  Relation positive;
  std::vector<EntityId> negatives;
  uint64_t tuple_seed = 0;

  EntityId anchor() const { return positive.u; }
  EntityId partner() const { return positive.v; }

  friend bool operator==(const RelationTuple&, const RelationTuple&) = default;
};

// Anchor first, then the partner, then negatives in order; duplicates removed
// with first occurrence kept.
std::vector<EntityId> DistinctEntities(const RelationTuple& tuple);

struct Batch {
  int64_t step = 0;
  double sampling_ratio = 0.0;  // q = b / |E_train|
  std::vector<RelationTuple> tuples;  // ordered by positive relation
};

// Pure function of (seed, step, canonical positive pair).
uint64_t TupleSeed(uint64_t seed, int64_t step, const Relation& positive);

// Draws k distinct entities uniformly from V \ {u, v} without consulting the
// relation set. Requires num_entities >= k + 2.
absl::StatusOr<std::vector<EntityId>> SampleNegativesDecoupled(
    const Relation& positive, int k, int num_entities, uint64_t tuple_seed);

// Poisson subsampling of train relations with q = expected_batch / |E_train|,
// each included positive paired with decoupled negatives. Inclusion of a
// relation depends only on (seed, step, relation), so removing one relation
// from the training set never changes any other tuple.
absl::StatusOr<Batch> SampleBatch(const GraphSplit& split, int64_t step,
                                  int expected_batch, int k, uint64_t seed);

// Same with an explicit inclusion probability. Adjacent training sets must be
// sampled at the same q for their batches to agree outside the removed tuple.
absl::StatusOr<Batch> SampleBatchWithRatio(const GraphSplit& split,
                                           int64_t step, double q, int k,
                                           uint64_t seed);

// In-batch negatives: tuple i pairs its anchor with every endpoint of the
// other positives (excluding its own endpoints). Couples tuples to each
// other; for non-private baselines and diagnostics only.
absl::StatusOr<std::vector<std::vector<EntityId>>> SampleNegativesInBatch(
    std::span<const Relation> batch_positives);

}  // namespace dprel

#endif  // DPREL_SAMPLER_H_
