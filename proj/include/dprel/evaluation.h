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

#ifndef DPREL_EVALUATION_H_
#define DPREL_EVALUATION_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "dprel/encoder.h"
#include "dprel/graph_store.h"

namespace dprel {

inline constexpr int kDefaultEvalBatch = 256;
inline constexpr int kDefaultMiaPairs = 2000;

// Pooled embedding of every entity, one row per entity id.
RowMatrix EmbedEntities(const EncoderParams& params,
                        const TextAttributedGraph& graph, int threads = 1);

struct RankMetrics {
  double prec1 = 0.0;
  double mrr = 0.0;
  int64_t queries = 0;
};

// Row i of `queries` is scored by dot product against every row of
// `targets`; its true target is row i. Ties are broken by target index, so
// a tied candidate with a smaller index ranks ahead.
absl::StatusOr<RankMetrics> RankBatch(const RowMatrix& queries,
                                      const RowMatrix& targets);

// In-batch-negative ranking over relations (u as query, v as target). The
// relations are shuffled under `seed` and cut into batches of `batch_size`;
// a trailing batch smaller than 2 is dropped. Metrics average over queries.
// Using other positives as candidates is harmless here: nothing computed at
// evaluation time feeds back into training.
absl::StatusOr<RankMetrics> EvaluateRanking(const RowMatrix& embeddings,
                                            std::span<const Relation> relations,
                                            int batch_size, uint64_t seed);

struct F1Scores {
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
};

// Per-class F1 with 0 wherever precision or recall is undefined; macro is
// the unweighted class mean, micro uses global counts.
absl::StatusOr<F1Scores> ComputeF1(std::span<const int> truth,
                                   std::span<const int> predicted,
                                   int num_classes);

struct ProbeOptions {
  int shots = 8;  // per class, for both training and validation
  std::vector<double> learning_rates = {0.01, 0.1, 1.0};
  int epochs = 300;
};

struct ProbeResult {
  F1Scores test;
  double learning_rate = 0.0;
  int64_t num_test = 0;
};

// Few-shot softmax regression on frozen embeddings. Per class, `shots`
// labeled entities train and `shots` validate; the rest are the test set.
// Features are standardized with training statistics. Labels < 0 are
// ignored.
absl::StatusOr<ProbeResult> LinearProbe(const RowMatrix& embeddings,
                                        std::span<const int> labels,
                                        const ProbeOptions& options,
                                        uint64_t seed);

// Cosine similarity; 0 when either vector is zero.
double CosineScore(const Vector& a, const Vector& b);

std::vector<double> MiaScores(const RowMatrix& embeddings,
                              std::span<const Relation> pairs);

struct TprPoint {
  double fpr = 0.0;        // requested level
  double threshold = 0.0;  // members at or above it are flagged
  double tpr = 0.0;
  double achieved_fpr = 0.0;
};

// For level f the threshold is the smallest value t with
// |{non-members >= t}| <= floor(f * n) (just above the next non-member
// score). TPR is the fraction of members >= t.
std::vector<TprPoint> TprAtFpr(std::span<const double> members,
                               std::span<const double> non_members,
                               std::span<const double> fpr_levels);

struct WilcoxonResult {
  double p = 1.0;
  double w_plus = 0.0;  // sum of ranks of positive differences
  int n = 0;            // non-zero differences
  bool exact = false;
};

inline constexpr int kWilcoxonExactMax = 20;

// One-sided signed-rank test of H1: differences tend to be positive. Zeros
// are dropped and tied magnitudes get average ranks. Exact null
// distribution for n <= kWilcoxonExactMax, otherwise a normal
// approximation with tie and continuity corrections. kExact and kNormal
// force one route regardless of n.
enum class WilcoxonMethod { kAuto, kExact, kNormal };
absl::StatusOr<WilcoxonResult> WilcoxonSignedRank(
    std::span<const double> differences,
    WilcoxonMethod method = WilcoxonMethod::kAuto);

// Null distribution of 2 W+ when every sign is equally likely: entry s is
// the probability that twice the positive rank sum equals s. Ranks are given
// doubled so that average ranks stay integral.
std::vector<double> SignedRankNullDistribution(
    std::span<const int> doubled_ranks);

struct MiaReport {
  std::vector<double> member_scores;
  std::vector<double> non_member_scores;
  std::vector<TprPoint> tpr_at_fpr;
  double wilcoxon_p = 1.0;
  int n_pairs = 0;
};

inline constexpr double kMiaFprLevels[] = {0.01, 0.05, 0.1};

// Samples n_pairs members and n_pairs non-members without replacement,
// pairs them by sample index, and reports TPR at kMiaFprLevels plus the
// Wilcoxon p of member minus non-member scores.
absl::StatusOr<MiaReport> Audit(const RowMatrix& embeddings,
                                std::span<const Relation> members,
                                std::span<const Relation> non_members,
                                int n_pairs, uint64_t seed);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  int64_t count = 0;
};

// Equal-width bins over [lo, hi]; values outside are clamped into the end
// bins.
std::vector<HistogramBin> ScoreHistogram(std::span<const double> scores,
                                         int bins, double lo, double hi);

}  // namespace dprel

#endif  // DPREL_EVALUATION_H_
