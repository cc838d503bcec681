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

#include "dprel/encoder.h"

#include <cmath>
#include <random>
#include <vector>

#include "dprel/privacy_engine.h"
#include "gtest/gtest.h"
#include "pipeline.h"
#include "reference_model.h"
#include "test_util.h"

namespace dprel {
namespace {

using ::dprel::testing::FiniteDifferenceGrad;
using ::dprel::testing::Flatten;
using ::dprel::testing::LibraryTupleCache;
using ::dprel::testing::LibraryTupleGrad;
using ::dprel::testing::MakeGraph;
using ::dprel::testing::RandomConfig;
using ::dprel::testing::RandomTuple;
using ::dprel::testing::Randomize;
using ::dprel::testing::RefEncode;
using ::dprel::testing::RefTupleGrad;
using ::dprel::testing::ToRef;

TEST(EncoderConfigTest, Validation) {
  EncoderConfig c;
  c.vocab_size = 10;
  c.dims = {4};
  EXPECT_FALSE(ValidateConfig(c).ok());
  c.dims = {4, 0};
  EXPECT_FALSE(ValidateConfig(c).ok());
  c.dims = {4, 3};
  EXPECT_TRUE(ValidateConfig(c).ok());
  c.mode = TrainMode::kAdapter;
  EXPECT_FALSE(ValidateConfig(c).ok());
  c.rank = 2;
  EXPECT_TRUE(ValidateConfig(c).ok());
  c.vocab_size = 1;
  EXPECT_FALSE(ValidateConfig(c).ok());
}

TEST(InitTest, WeightScaleFollowsFanIn) {
  EncoderConfig c;
  c.vocab_size = 5;
  c.dims = {64, 200};
  auto p = InitParams(c, 3);
  ASSERT_TRUE(p.ok());
  const RowMatrix& w = p->blocks()[0].weight;
  ASSERT_GE(w.size(), 10000);
  const double mean = w.mean();
  const double sd =
      std::sqrt((w.array() - mean).square().sum() / (w.size() - 1));
  EXPECT_NEAR(sd, 1.0 / 8.0, 0.1 / 8.0);
  EXPECT_TRUE(p->embed().row(kPadId).isZero());
  EXPECT_TRUE(p->blocks()[0].bias.isZero());
}

TEST(InitTest, AdapterStartsAtBaseWeights) {
  EncoderConfig c;
  c.vocab_size = 20;
  c.dims = {8, 6, 4};
  c.mode = TrainMode::kAdapter;
  c.rank = 2;
  auto p = InitParams(c, 4);
  ASSERT_TRUE(p.ok());
  for (int l = 0; l < 2; ++l) {
    EXPECT_TRUE(p->blocks()[l].up.isZero());
    EXPECT_EQ(p->blocks()[l].down.rows(), 2);
    EXPECT_TRUE(p->EffectiveWeight(l) == p->blocks()[l].weight);
  }
  const auto shapes = p->TrainableShapes();
  ASSERT_EQ(shapes.size(), 4u);
  EXPECT_EQ(shapes[0].rows, 2);
  EXPECT_EQ(shapes[0].cols, 8);
  EXPECT_EQ(shapes[1].rows, 6);
  EXPECT_EQ(shapes[1].cols, 2);
}

TEST(InitTest, DeterministicUnderSeed) {
  EncoderConfig c;
  c.vocab_size = 20;
  c.dims = {4, 4};
  auto a = InitParams(c, 1), b = InitParams(c, 1), d = InitParams(c, 2);
  ASSERT_TRUE(a.ok() && b.ok() && d.ok());
  EXPECT_TRUE(*a == *b);
  EXPECT_FALSE(*a == *d);
}

TEST(EncodeTest, MatchesScalarRecomputation) {
  std::mt19937_64 rng(5);
  for (bool adapter : {false, true}) {
    for (int trial = 0; trial < 20; ++trial) {
      EncoderConfig c = RandomConfig(rng, 12, adapter);
      c.dims[0] = 4;
      auto p = InitParams(c, trial);
      ASSERT_TRUE(p.ok());
      Randomize(*p, rng);
      std::vector<TokenId> toks = {static_cast<TokenId>(1 + rng() % 11),
                                   static_cast<TokenId>(1 + rng() % 11),
                                   static_cast<TokenId>(1 + rng() % 11)};
      TokenSeq seq = TokenSeq::FromTokens(toks, 5);
      EntityTrace tr = Encode(*p, seq);
      const auto want = RefEncode(ToRef(*p), seq.real());
      ASSERT_EQ(tr.embedding.size(), static_cast<Eigen::Index>(want.size()));
      for (size_t i = 0; i < want.size(); ++i) {
        EXPECT_LE(testing::RelErr(tr.embedding[i], want[i], 1e-3), 1e-12);
      }
      EXPECT_EQ(tr.length(), 3);
    }
  }
}

TEST(EncodeTest, PaddingDoesNotMatter) {
  EncoderConfig c;
  c.vocab_size = 10;
  c.dims = {3, 3};
  auto p = InitParams(c, 6);
  ASSERT_TRUE(p.ok());
  std::vector<TokenId> toks = {2, 5};
  EntityTrace a = Encode(*p, TokenSeq::FromTokens(toks, 2));
  EntityTrace b = Encode(*p, TokenSeq::FromTokens(toks, 16));
  EXPECT_TRUE(a.embedding == b.embedding);
}

// The stacked cache reproduces the gradient of an independent computation
// that backpropagates each relation's endpoints as separate slots.
TEST(BackwardTest, SharedEntityMatchesDuplicatedSlots) {
  std::mt19937_64 rng(7);
  for (bool adapter : {false, true}) {
    for (int trial = 0; trial < 15; ++trial) {
      EncoderConfig c = RandomConfig(rng, 15, adapter);
      auto p = InitParams(c, trial);
      ASSERT_TRUE(p.ok());
      Randomize(*p, rng);
      TextAttributedGraph g = MakeGraph(9, 15, {{0, 1}}, rng);
      RelationTuple t = RandomTuple(9, 1 + rng() % 5, rng);
      for (LossKind kind : {LossKind::kInfoNce, LossKind::kHinge}) {
        LossConfig lc;
        lc.kind = kind;
        lc.temperature = 0.7;
        const std::vector<double> got =
            LibraryTupleGrad(*p, g, t, lc).ToVector();
        double ref_loss = 0.0;
        const std::vector<double> want =
            Flatten(RefTupleGrad(ToRef(*p), g, t, lc, &ref_loss));
        EXPECT_LE(testing::MaxRelErr(got, want, 1e-12), 1e-10);
        EXPECT_NEAR(LibraryTupleCache(*p, g, t, lc).loss, ref_loss, 1e-12);
      }
    }
  }
}

TEST(BackwardTest, MatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  EncoderConfig c;
  c.vocab_size = 10;
  c.dims = {3, 4, 3};
  auto p = InitParams(c, 1);
  ASSERT_TRUE(p.ok());
  Randomize(*p, rng);
  TextAttributedGraph g = MakeGraph(6, 10, {{0, 1}}, rng, 4, 4, 4);
  RelationTuple t = RandomTuple(6, 2, rng);
  for (LossKind kind : {LossKind::kInfoNce, LossKind::kHinge}) {
    LossConfig lc;
    lc.kind = kind;
    const auto got = LibraryTupleGrad(*p, g, t, lc).ToVector();
    const auto fd = FiniteDifferenceGrad(*p, g, t, lc);
    EXPECT_LE(testing::MaxRelErr(got, fd), 1e-5);
  }
}

TEST(BackwardTest, CacheRowsAlignWithRealTokens) {
  std::mt19937_64 rng(9);
  EncoderConfig c;
  c.vocab_size = 10;
  c.dims = {3, 4, 2};
  auto p = InitParams(c, 2);
  ASSERT_TRUE(p.ok());
  TextAttributedGraph g = MakeGraph(8, 10, {{0, 1}}, rng, 1, 5, 6);
  RelationTuple t = RandomTuple(8, 3, rng);
  LowRankGradCache cache = LibraryTupleCache(*p, g, t, {}).cache;
  Eigen::Index tokens = 0;
  std::vector<TokenId> ids;
  for (EntityId e : DistinctEntities(t)) {
    tokens += g.attributes(e).length;
    for (TokenId x : g.attributes(e).real()) ids.push_back(x);
  }
  EXPECT_EQ(cache.num_rows(), tokens);
  ASSERT_TRUE(cache.embedding.has_value());
  EXPECT_EQ(cache.embedding->token_ids, ids);
  for (const DenseFactor& f : cache.dense) {
    EXPECT_EQ(f.inputs.rows(), tokens);
    EXPECT_EQ(f.output_grads.rows(), tokens);
  }
}

TEST(BackwardTest, AdapterModeFreezesEmbedding) {
  std::mt19937_64 rng(10);
  EncoderConfig c;
  c.vocab_size = 10;
  c.dims = {3, 4, 2};
  c.mode = TrainMode::kAdapter;
  c.rank = 2;
  auto p = InitParams(c, 2);
  ASSERT_TRUE(p.ok());
  TextAttributedGraph g = MakeGraph(8, 10, {{0, 1}}, rng);
  RelationTuple t = RandomTuple(8, 3, rng);
  LowRankGradCache cache = LibraryTupleCache(*p, g, t, {}).cache;
  EXPECT_FALSE(cache.embedding.has_value());
  EXPECT_EQ(cache.shapes.size(), 4u);
}

}  // namespace
}  // namespace dprel
