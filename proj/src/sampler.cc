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

#include "dprel/sampler.h"

#include <algorithm>

#include "absl/strings/str_cat.h"
#include "dprel/rng.h"

namespace dprel {

std::vector<EntityId> DistinctEntities(const RelationTuple& tuple) {
  std::vector<EntityId> out{tuple.anchor(), tuple.partner()};
  for (EntityId v : tuple.negatives) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

uint64_t TupleSeed(uint64_t seed, int64_t step, const Relation& positive) {
  return StreamSeed(seed, "negatives", static_cast<uint64_t>(step),
                    static_cast<uint64_t>(positive.u),
                    static_cast<uint64_t>(positive.v));
}

absl::StatusOr<std::vector<EntityId>> SampleNegativesDecoupled(
    const Relation& positive, int k, int num_entities, uint64_t tuple_seed) {
  if (k < 1) return absl::InvalidArgumentError("k must be >= 1");
  if (num_entities < k + 2) {
    return absl::InvalidArgumentError(absl::StrCat(
        "cannot draw ", k, " distinct negatives from ", num_entities,
        " entities"));
  }
  const auto [lo, hi] = std::minmax(positive.u, positive.v);
  Rng rng(tuple_seed);
  // Index i in [0, N-2) maps onto V \ {lo, hi} in increasing order.
  std::uniform_int_distribution<int> pick(0, num_entities - 3);
  std::vector<EntityId> out;
  out.reserve(k);
  if (2 * k > num_entities - 2) {
    // Dense regime: partial Fisher-Yates over the eligible set.
    std::vector<EntityId> pool;
    pool.reserve(num_entities - 2);
    for (EntityId v = 0; v < num_entities; ++v) {
      if (v != lo && v != hi) pool.push_back(v);
    }
    for (int j = 0; j < k; ++j) {
      std::uniform_int_distribution<int> rest(j, static_cast<int>(pool.size()) - 1);
      std::swap(pool[j], pool[rest(rng)]);
      out.push_back(pool[j]);
    }
    return out;
  }
  while (static_cast<int>(out.size()) < k) {
    EntityId v = pick(rng);
    if (v >= lo) ++v;
    if (v >= hi) ++v;
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

absl::StatusOr<Batch> SampleBatch(const GraphSplit& split, int64_t step,
                                  int expected_batch, int k, uint64_t seed) {
  const auto n_train = static_cast<int64_t>(split.train.size());
  if (n_train == 0) return absl::InvalidArgumentError("no train relations");
  if (expected_batch < 1 || expected_batch > n_train) {
    return absl::InvalidArgumentError(absl::StrCat(
        "expected batch ", expected_batch, " outside [1, ", n_train, "]"));
  }
  return SampleBatchWithRatio(
      split, step,
      static_cast<double>(expected_batch) / static_cast<double>(n_train), k,
      seed);
}

absl::StatusOr<Batch> SampleBatchWithRatio(const GraphSplit& split,
                                           int64_t step, double q, int k,
                                           uint64_t seed) {
  if (!(q > 0.0 && q <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("sampling ratio ", q, " outside (0, 1]"));
  }
  if (k < 1 || split.num_entities < k + 2) {
    return absl::InvalidArgumentError(absl::StrCat(
        "cannot draw ", k, " distinct negatives from ", split.num_entities,
        " entities"));
  }
  Batch batch;
  batch.step = step;
  batch.sampling_ratio = q;
  for (const Relation& r : split.train) {
    const double u = UnitInterval(StreamSeed(seed, "sampling",
                                             static_cast<uint64_t>(step),
                                             static_cast<uint64_t>(r.u),
                                             static_cast<uint64_t>(r.v)));
    if (u >= q) continue;
    RelationTuple tuple;
    tuple.positive = r;
    tuple.tuple_seed = TupleSeed(seed, step, r);
    auto negatives =
        SampleNegativesDecoupled(r, k, split.num_entities, tuple.tuple_seed);
    if (!negatives.ok()) return negatives.status();
    tuple.negatives = std::move(*negatives);
    batch.tuples.push_back(std::move(tuple));
  }
  return batch;
}

absl::StatusOr<std::vector<std::vector<EntityId>>> SampleNegativesInBatch(
    std::span<const Relation> batch_positives) {
  if (batch_positives.size() < 2) {
    return absl::InvalidArgumentError("in-batch negatives need >= 2 positives");
  }
  std::vector<std::vector<EntityId>> out(batch_positives.size());
  for (size_t i = 0; i < batch_positives.size(); ++i) {
    const Relation& own = batch_positives[i];
    for (size_t j = 0; j < batch_positives.size(); ++j) {
      if (j == i) continue;
      for (EntityId v : {batch_positives[j].u, batch_positives[j].v}) {
        if (v == own.u || v == own.v) continue;
        if (std::find(out[i].begin(), out[i].end(), v) == out[i].end()) {
          out[i].push_back(v);
        }
      }
    }
  }
  return out;
}

}  // namespace dprel
