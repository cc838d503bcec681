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
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "dprel/rng.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace dprel {
namespace {

GraphSplit RandomSplit(int n, int m, std::mt19937_64& rng) {
  std::set<Relation> rels;
  std::uniform_int_distribution<int> pick(0, n - 1);
  while (static_cast<int>(rels.size()) < m) {
    auto r = Relation::Make(pick(rng), pick(rng));
    if (r) rels.insert(*r);
  }
  GraphSplit s;
  s.num_entities = n;
  s.train.assign(rels.begin(), rels.end());
  return s;
}

TEST(DecoupledTest, OnlyChoiceIsPermutation) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto neg = SampleNegativesDecoupled({0, 1}, 2, 4, seed);
    ASSERT_TRUE(neg.ok());
    std::vector<EntityId> got = *neg;
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, (std::vector<EntityId>{2, 3}));
  }
}

TEST(DecoupledTest, DistinctAndExcludesEndpoints) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = std::uniform_int_distribution<int>(4, 60)(rng);
    const int k = std::uniform_int_distribution<int>(1, n - 2)(rng);
    auto r = Relation::Make(std::uniform_int_distribution<int>(0, n - 1)(rng),
                            std::uniform_int_distribution<int>(0, n - 1)(rng));
    if (!r) continue;
    auto neg = SampleNegativesDecoupled(*r, k, n, rng());
    ASSERT_TRUE(neg.ok());
    ASSERT_EQ(static_cast<int>(neg->size()), k);
    std::set<EntityId> uniq(neg->begin(), neg->end());
    EXPECT_EQ(static_cast<int>(uniq.size()), k);
    EXPECT_EQ(uniq.count(r->u), 0u);
    EXPECT_EQ(uniq.count(r->v), 0u);
    for (EntityId v : *neg) {
      EXPECT_GE(v, 0);
      EXPECT_LT(v, n);
    }
  }
}

TEST(DecoupledTest, Deterministic) {
  auto a = SampleNegativesDecoupled({3, 7}, 5, 50, 1234);
  auto b = SampleNegativesDecoupled({3, 7}, 5, 50, 1234);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_EQ(*a, *b);
}

TEST(DecoupledTest, RejectsTooFewEntities) {
  EXPECT_FALSE(SampleNegativesDecoupled({0, 1}, 3, 4, 0).ok());
  EXPECT_FALSE(SampleNegativesDecoupled({0, 1}, 0, 4, 0).ok());
}

TEST(DecoupledTest, UniformOverEligibleEntitiesPerSlot) {
  const int n = 100, k = 3, draws = 100000;
  std::vector<std::vector<int64_t>> counts(k, std::vector<int64_t>(n, 0));
  for (int i = 0; i < draws; ++i) {
    auto neg = SampleNegativesDecoupled({10, 20}, k, n,
                                        StreamSeed(7, "negatives", i));
    ASSERT_TRUE(neg.ok());
    for (int j = 0; j < k; ++j) ++counts[j][(*neg)[j]];
  }
  const double p = 1.0 / 98.0;
  const double sd = std::sqrt(draws * p * (1 - p));
  int outside = 0;
  for (int j = 0; j < k; ++j) {
    EXPECT_EQ(counts[j][10], 0);
    EXPECT_EQ(counts[j][20], 0);
    for (int v = 0; v < n; ++v) {
      if (v == 10 || v == 20) continue;
      if (std::fabs(counts[j][v] - draws * p) > 3 * sd) ++outside;
    }
  }
  // 294 cells at the 3-sigma level: a handful of excursions is expected.
  EXPECT_LE(outside, 5);
}

TEST(SampleBatchTest, FullRatioIncludesEveryRelationOnce) {
  std::mt19937_64 rng(2);
  GraphSplit s = RandomSplit(30, 80, rng);
  auto b = SampleBatch(s, 1, 80, 3, 5);
  ASSERT_TRUE(b.ok()) << b.status();
  ASSERT_EQ(b->tuples.size(), 80u);
  for (size_t i = 0; i < 80; ++i) EXPECT_EQ(b->tuples[i].positive, s.train[i]);
  EXPECT_DOUBLE_EQ(b->sampling_ratio, 1.0);
}

TEST(SampleBatchTest, MeanBatchSizeMatchesBinomial) {
  std::mt19937_64 rng(3);
  GraphSplit s = RandomSplit(2000, 10000, rng);
  int64_t total = 0;
  const int steps = 200;
  for (int t = 1; t <= steps; ++t) {
    auto b = SampleBatch(s, t, 1000, 1, 11);
    ASSERT_TRUE(b.ok());
    total += static_cast<int64_t>(b->tuples.size());
  }
  const double mean = static_cast<double>(total) / steps;
  const double sd_of_mean = std::sqrt(10000 * 0.1 * 0.9 / steps);
  EXPECT_LE(std::fabs(mean - 1000.0), 3 * sd_of_mean) << mean;
}

TEST(SampleBatchTest, DeterministicAndStepDependent) {
  std::mt19937_64 rng(4);
  GraphSplit s = RandomSplit(50, 200, rng);
  auto a = SampleBatch(s, 3, 40, 4, 9);
  auto b = SampleBatch(s, 3, 40, 4, 9);
  auto c = SampleBatch(s, 4, 40, 4, 9);
  ASSERT_TRUE(a.ok() && b.ok() && c.ok());
  EXPECT_EQ(a->tuples, b->tuples);
  EXPECT_NE(a->tuples, c->tuples);
}

TEST(SampleBatchTest, EachPositiveAtMostOnceAndAnchorIsMin) {
  std::mt19937_64 rng(5);
  GraphSplit s = RandomSplit(40, 300, rng);
  for (int t = 1; t <= 20; ++t) {
    auto b = SampleBatch(s, t, 100, 5, 1);
    ASSERT_TRUE(b.ok());
    std::set<Relation> seen;
    for (const RelationTuple& tup : b->tuples) {
      EXPECT_TRUE(seen.insert(tup.positive).second);
      EXPECT_LT(tup.anchor(), tup.partner());
      EXPECT_EQ(tup.tuple_seed, TupleSeed(1, t, tup.positive));
    }
  }
}

TEST(SampleBatchTest, RejectsBadArguments) {
  std::mt19937_64 rng(6);
  GraphSplit s = RandomSplit(5, 6, rng);
  EXPECT_FALSE(SampleBatch(s, 1, 7, 1, 0).ok());
  EXPECT_FALSE(SampleBatch(s, 1, 0, 1, 0).ok());
  EXPECT_FALSE(SampleBatch(s, 1, 3, 4, 0).ok());
  EXPECT_FALSE(SampleBatchWithRatio(s, 1, 0.0, 1, 0).ok());
  EXPECT_FALSE(SampleBatchWithRatio(s, 1, 1.5, 1, 0).ok());
}

// Removing a relation from the training set leaves every other tuple intact.
TEST(SampleBatchTest, AdjacentSetsDifferInAtMostOneTuple) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    GraphSplit s = RandomSplit(60, 150, rng);
    const size_t drop = rng() % s.train.size();
    GraphSplit s2 = s;
    s2.train.erase(s2.train.begin() + drop);
    const uint64_t seed = rng();
    const int64_t step = 1 + rng() % 1000;
    const double q = 0.3;
    auto a = SampleBatchWithRatio(s, step, q, 4, seed);
    auto b = SampleBatchWithRatio(s2, step, q, 4, seed);
    ASSERT_TRUE(a.ok() && b.ok());
    std::vector<RelationTuple> only_a;
    for (const RelationTuple& t : a->tuples) {
      if (std::find(b->tuples.begin(), b->tuples.end(), t) == b->tuples.end()) {
        only_a.push_back(t);
      }
    }
    for (const RelationTuple& t : b->tuples) {
      EXPECT_NE(std::find(a->tuples.begin(), a->tuples.end(), t),
                a->tuples.end());
    }
    ASSERT_LE(only_a.size(), 1u);
    if (!only_a.empty()) {
      EXPECT_EQ(only_a[0].positive, s.train[drop]);
    }
  }
}

TEST(InBatchTest, PairsWithOtherPositives) {
  std::vector<Relation> batch = {{0, 1}, {2, 3}};
  auto neg = SampleNegativesInBatch(batch);
  ASSERT_TRUE(neg.ok());
  std::vector<EntityId> got = (*neg)[0];
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, (std::vector<EntityId>{2, 3}));
  EXPECT_FALSE(SampleNegativesInBatch(std::vector<Relation>{{0, 1}}).ok());
}

// Coupling pathology: dropping (2,3) changes the negatives of tuple 0.
TEST(InBatchTest, ViolatesDecoupling) {
  std::vector<Relation> full = {{0, 1}, {2, 3}, {4, 5}};
  std::vector<Relation> adjacent = {{0, 1}, {4, 5}};
  auto a = SampleNegativesInBatch(full);
  auto b = SampleNegativesInBatch(adjacent);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_NE((*a)[0], (*b)[0]);
  EXPECT_NE((*a)[1 + 1], (*b)[1]);
}

TEST(DistinctEntitiesTest, KeepsFirstOccurrence) {
  RelationTuple t;
  t.positive = {1, 4};
  t.negatives = {7, 4, 7, 2};
  EXPECT_EQ(DistinctEntities(t), (std::vector<EntityId>{1, 4, 7, 2}));
}

}  // namespace
}  // namespace dprel
