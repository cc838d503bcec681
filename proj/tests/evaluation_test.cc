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

#include "dprel/evaluation.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dprel/encoder.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace dprel {
namespace {

using ::dprel::testing::MakeGraph;
using ::dprel::testing::RandomMatrix;

// One-sided p of the signed-rank statistic by listing all 2^n sign patterns.
double BruteForceSignedRankP(std::vector<double> d) {
  std::sort(d.begin(), d.end(),
            [](double a, double b) { return std::fabs(a) < std::fabs(b); });
  const int n = static_cast<int>(d.size());
  std::vector<double> rank(n);
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && std::fabs(d[j]) == std::fabs(d[i])) ++j;
    for (int k = i; k < j; ++k) rank[k] = (i + 1 + j) / 2.0;
    i = j;
  }
  double observed = 0.0;
  for (int i = 0; i < n; ++i) {
    if (d[i] > 0) observed += rank[i];
  }
  int64_t at_least = 0;
  for (uint32_t mask = 0; mask < (1u << n); ++mask) {
    double w = 0.0;
    for (int i = 0; i < n; ++i) {
      if (mask >> i & 1) w += rank[i];
    }
    at_least += w >= observed - 1e-9;
  }
  return static_cast<double>(at_least) / static_cast<double>(1u << n);
}

TEST(RankBatchTest, HandCase) {
  RowMatrix q(2, 2), t(2, 2);
  q << 1, 0, 0, 1;
  t << 2, 0, 3, 1;
  auto m = RankBatch(q, t);
  ASSERT_TRUE(m.ok());
  // Query 0 scores (2, 3): its target ranks second. Query 1 scores (0, 1).
  EXPECT_DOUBLE_EQ(m->prec1, 0.5);
  EXPECT_DOUBLE_EQ(m->mrr, (0.5 + 1.0) / 2);
  EXPECT_EQ(m->queries, 2);
}

TEST(RankBatchTest, TiesFavorSmallerIndex) {
  RowMatrix q = RowMatrix::Ones(3, 1), t = RowMatrix::Ones(3, 1);
  auto m = RankBatch(q, t);
  ASSERT_TRUE(m.ok());
  EXPECT_DOUBLE_EQ(m->prec1, 1.0 / 3);
  EXPECT_DOUBLE_EQ(m->mrr, (1.0 + 0.5 + 1.0 / 3) / 3);
  EXPECT_FALSE(RankBatch(RowMatrix::Ones(3, 2), RowMatrix::Ones(2, 2)).ok());
}

TEST(RankBatchTest, RandomEmbeddingsGiveChancePrecision) {
  std::mt19937_64 rng(1);
  const int trials = 200, b = 256;
  double hits = 0;
  for (int i = 0; i < trials; ++i) {
    auto m = RankBatch(RandomMatrix(b, 8, rng), RandomMatrix(b, 8, rng));
    ASSERT_TRUE(m.ok());
    hits += m->prec1 * b;
  }
  const double n = trials * b, p = 1.0 / b;
  EXPECT_LE(std::fabs(hits / n - p), 3 * std::sqrt(p * (1 - p) / n));
}

TEST(EvaluateRankingTest, PerfectEmbeddingsAndBatching) {
  // Entity 2i and 2i+1 share a one-hot direction.
  const int pairs = 10;
  RowMatrix emb = RowMatrix::Zero(2 * pairs, pairs);
  std::vector<Relation> rels;
  for (int i = 0; i < pairs; ++i) {
    emb(2 * i, i) = emb(2 * i + 1, i) = 1.0;
    rels.push_back({2 * i, 2 * i + 1});
  }
  auto m = EvaluateRanking(emb, rels, 3, 7);
  ASSERT_TRUE(m.ok());
  EXPECT_DOUBLE_EQ(m->prec1, 1.0);
  EXPECT_DOUBLE_EQ(m->mrr, 1.0);
  EXPECT_EQ(m->queries, 9);  // trailing batch of one is dropped
}

TEST(F1Test, ConstantPredictor) {
  std::vector<int> truth = {0, 0, 1, 1}, pred = {0, 0, 0, 0};
  auto f = ComputeF1(truth, pred, 2);
  ASSERT_TRUE(f.ok());
  EXPECT_DOUBLE_EQ(f->micro_f1, 0.5);
  EXPECT_NEAR(f->macro_f1, 1.0 / 3, 1e-15);
  EXPECT_FALSE(ComputeF1(truth, std::vector<int>{0}, 2).ok());
}

TEST(ProbeTest, SeparableClassesAreLearned) {
  std::mt19937_64 rng(2);
  const int n = 300, classes = 3;
  RowMatrix emb = RandomMatrix(n, 4, rng, 0.1);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = i % classes;
    emb(i, labels[i]) += 3.0;
  }
  auto r = LinearProbe(emb, labels, {}, 5);
  ASSERT_TRUE(r.ok()) << r.status();
  EXPECT_GT(r->test.macro_f1, 0.95);
  EXPECT_EQ(r->num_test, n - 2 * 8 * classes);
}

TEST(ProbeTest, IndependentLabelsGiveChance) {
  const int classes = 4, n = 400, seeds = 20;
  double sum = 0.0;
  int64_t tested = 0;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(100 + s);
    RowMatrix emb = RandomMatrix(n, 6, rng);
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(rng() % classes);
    auto r = LinearProbe(emb, labels, {}, s);
    ASSERT_TRUE(r.ok()) << r.status();
    sum += r->test.micro_f1 * r->num_test;
    tested += r->num_test;
  }
  const double p = 1.0 / classes;
  EXPECT_LE(std::fabs(sum / tested - p), 3 * std::sqrt(p * (1 - p) / tested));
}

TEST(ProbeTest, NeedsEnoughLabels) {
  RowMatrix emb = RowMatrix::Ones(10, 2);
  std::vector<int> labels(10, 0);
  labels[0] = 1;
  EXPECT_FALSE(LinearProbe(emb, labels, {}, 1).ok());
}

TEST(CosineTest, ScaleInvariantAndZero) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    Vector a = RandomMatrix(5, 1, rng), b = RandomMatrix(5, 1, rng);
    const double c = std::exp(std::normal_distribution<double>(0, 3)(rng));
    EXPECT_NEAR(CosineScore(c * a, b), CosineScore(a, b), 1e-14);
    EXPECT_LE(std::fabs(CosineScore(a, b)), 1.0 + 1e-15);
  }
  EXPECT_EQ(CosineScore(Vector::Zero(3), Vector::Ones(3)), 0.0);
}

TEST(TprTest, HandCase) {
  std::vector<double> members = {0.9, 0.8, 0.1};
  std::vector<double> non_members = {0.7, 0.2, 0.05};
  std::vector<double> levels = {1.0 / 3};
  auto pts = TprAtFpr(members, non_members, levels);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_NEAR(pts[0].tpr, 2.0 / 3, 1e-15);
  EXPECT_LE(pts[0].achieved_fpr, 1.0 / 3 + 1e-15);
  EXPECT_GT(pts[0].threshold, 0.2);
  EXPECT_LE(pts[0].threshold, 0.7);
}

TEST(TprTest, ZeroLevelFlagsOnlyAboveAllNonMembers) {
  std::vector<double> members = {0.9, 0.5};
  std::vector<double> non_members = {0.7, 0.2};
  std::vector<double> levels = {0.0, 1.0};
  auto pts = TprAtFpr(members, non_members, levels);
  EXPECT_DOUBLE_EQ(pts[0].tpr, 0.5);
  EXPECT_DOUBLE_EQ(pts[0].achieved_fpr, 0.0);
  EXPECT_DOUBLE_EQ(pts[1].tpr, 1.0);
}

TEST(TprTest, ExchangeableScoresGiveTprNearLevel) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  const int n = 20000;
  std::vector<double> a(n), b(n);
  for (double& x : a) x = normal(rng);
  for (double& x : b) x = normal(rng);
  std::vector<double> levels(kMiaFprLevels, kMiaFprLevels + 3);
  for (const TprPoint& pt : TprAtFpr(a, b, levels)) {
    // Both samples contribute binomial error.
    EXPECT_LE(std::fabs(pt.tpr - pt.fpr),
              4 * std::sqrt(2 * pt.fpr * (1 - pt.fpr) / n));
    EXPECT_LE(pt.achieved_fpr, pt.fpr);
  }
}

TEST(WilcoxonTest, FiveAllPositive) {
  std::vector<double> d = {0.3, 1.2, 0.7, 2.0, 0.1};
  auto w = WilcoxonSignedRank(d);
  ASSERT_TRUE(w.ok());
  EXPECT_TRUE(w->exact);
  EXPECT_DOUBLE_EQ(w->p, 1.0 / 32);
  EXPECT_DOUBLE_EQ(w->w_plus, 15.0);
  EXPECT_EQ(w->n, 5);
}

TEST(WilcoxonTest, NullDistributionSumsToOne) {
  for (int n = 1; n <= 20; ++n) {
    std::vector<int> doubled(n);
    for (int i = 0; i < n; ++i) doubled[i] = 2 * (i + 1);
    const auto dist = SignedRankNullDistribution(doubled);
    EXPECT_NEAR(std::accumulate(dist.begin(), dist.end(), 0.0), 1.0, 1e-14);
  }
  // Tied ranks: {1.5, 1.5, 3} doubled.
  const auto tied = SignedRankNullDistribution(std::vector<int>{3, 3, 6});
  EXPECT_NEAR(std::accumulate(tied.begin(), tied.end(), 0.0), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(tied[6], 2.0 / 8);
}

TEST(WilcoxonTest, ExactMatchesEnumeration) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 5 + trial % 12;
    std::vector<double> d(n);
    std::normal_distribution<double> normal(0.3, 1.0);
    // Rounding creates ties.
    for (double& x : d) x = std::round(normal(rng) * 4) / 4;
    if (std::count(d.begin(), d.end(), 0.0) > n - 5) continue;
    auto w = WilcoxonSignedRank(d, WilcoxonMethod::kExact);
    ASSERT_TRUE(w.ok());
    std::vector<double> nz;
    for (double x : d) {
      if (x != 0.0) nz.push_back(x);
    }
    EXPECT_NEAR(w->p, BruteForceSignedRankP(nz), 1e-12);
  }
}

TEST(WilcoxonTest, NormalApproximationTracksExact) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> shifted(0.4, 1.0);
  std::vector<double> d(25);
  for (double& x : d) x = shifted(rng);
  std::vector<double> sub(d.begin(), d.begin() + 20);
  auto exact20 = WilcoxonSignedRank(sub);
  auto normal20 = WilcoxonSignedRank(sub, WilcoxonMethod::kNormal);
  ASSERT_TRUE(exact20.ok() && normal20.ok());
  EXPECT_TRUE(exact20->exact);
  EXPECT_NEAR(exact20->p, BruteForceSignedRankP(sub), 1e-12);
  EXPECT_LE(std::fabs(normal20->p - exact20->p), 0.01);
  auto auto25 = WilcoxonSignedRank(d);
  auto exact25 = WilcoxonSignedRank(d, WilcoxonMethod::kExact);
  ASSERT_TRUE(auto25.ok() && exact25.ok());
  EXPECT_FALSE(auto25->exact);
  EXPECT_LE(std::fabs(auto25->p - exact25->p), 0.01);
}

TEST(WilcoxonTest, Errors) {
  EXPECT_FALSE(WilcoxonSignedRank(std::vector<double>{0, 0, 0, 0, 0, 0}).ok());
  EXPECT_FALSE(WilcoxonSignedRank(std::vector<double>{1, 2, 3, 0}).ok());
  EXPECT_FALSE(WilcoxonSignedRank(std::vector<double>{1, 2, 3, 4, NAN}).ok());
}

TEST(AuditTest, RandomEncoderShowsNoSignal) {
  // Untrained encoder: members and non-members are exchangeable.
  int small_p = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<Relation> rels;
    for (int i = 0; i < 600; ++i) {
      auto r = Relation::Make(rng() % 300, rng() % 300);
      if (r) rels.push_back(*r);
    }
    TextAttributedGraph g = MakeGraph(300, 50, rels, rng, 3, 8, 8);
    auto split = SplitRelations(g, 0.5, seed);
    ASSERT_TRUE(split.ok());
    EncoderConfig c;
    c.vocab_size = 50;
    c.dims = {8, 8};
    auto p = InitParams(c, seed);
    ASSERT_TRUE(p.ok());
    RowMatrix emb = EmbedEntities(*p, g);
    auto rep = Audit(emb, split->train, split->eval, 250, seed);
    ASSERT_TRUE(rep.ok()) << rep.status();
    EXPECT_EQ(rep->member_scores.size(), 250u);
    EXPECT_EQ(rep->non_member_scores.size(), 250u);
    small_p += rep->wilcoxon_p < 0.01;
  }
  EXPECT_LE(small_p, 1);
}

TEST(AuditTest, SeparatedScoresAreDetected) {
  // Members share a direction, non-members are orthogonal.
  RowMatrix emb = RowMatrix::Zero(40, 2);
  std::vector<Relation> members, non_members;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; i += 2) {
    emb.row(i) << 1, 0.1 * (rng() % 5);
    emb.row(i + 1) << 1, 0;
    members.push_back({i, i + 1});
  }
  for (int i = 20; i < 40; i += 2) {
    emb.row(i) << 1, 0;
    emb.row(i + 1) << 0, 1;
    non_members.push_back({i, i + 1});
  }
  auto rep = Audit(emb, members, non_members, 10, 1);
  ASSERT_TRUE(rep.ok());
  EXPECT_LT(rep->wilcoxon_p, 0.01);
  EXPECT_DOUBLE_EQ(rep->tpr_at_fpr[1].tpr, 1.0);
  EXPECT_FALSE(Audit(emb, members, non_members, 11, 1).ok());
}

TEST(HistogramTest, ClampsIntoEndBins) {
  std::vector<double> s = {-2.0, -0.5, 0.0, 0.49, 0.5, 3.0};
  auto h = ScoreHistogram(s, 2, -1.0, 1.0);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0].count, 2);
  EXPECT_EQ(h[1].count, 4);
  EXPECT_DOUBLE_EQ(h[1].lo, 0.0);
}

}  // namespace
}  // namespace dprel
