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
#include <limits>
#include <numeric>

#include "absl/strings/str_cat.h"
#include "dprel/parallel.h"
#include "dprel/rng.h"

namespace dprel {
namespace {

// Fisher-Yates driven directly by the raw generator output so the order is
// identical across standard library implementations.
template <typename T>
void Shuffle(std::vector<T>& items, Rng& rng) {
  for (size_t i = items.size(); i > 1; --i) {
    const size_t j = rng() % i;
    std::swap(items[i - 1], items[j]);
  }
}

// First `count` entries of a seeded permutation of [0, n).
std::vector<size_t> SampleIndices(size_t n, size_t count, Rng& rng) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  for (size_t i = 0; i < count; ++i) {
    const size_t j = i + rng() % (n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

int ArgMax(const RowVector& row) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < row.size(); ++c) {
    if (row(c) > row(best)) best = c;
  }
  return static_cast<int>(best);
}

}  // namespace

RowMatrix EmbedEntities(const EncoderParams& params,
                        const TextAttributedGraph& graph, int threads) {
  RowMatrix out(graph.num_entities(), params.config().output_dim());
  ParallelFor(graph.num_entities(), threads, [&](int64_t e) {
    out.row(e) =
        Encode(params, graph.attributes(static_cast<EntityId>(e))).embedding;
  });
  return out;
}

absl::StatusOr<RankMetrics> RankBatch(const RowMatrix& queries,
                                      const RowMatrix& targets) {
  if (queries.rows() < 2 || queries.rows() != targets.rows() ||
      queries.cols() != targets.cols()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "ranking batch needs >= 2 aligned pairs, got ", queries.rows(), "x",
        queries.cols(), " queries and ", targets.rows(), "x", targets.cols(),
        " targets"));
  }
  const RowMatrix scores = queries * targets.transpose();
  RankMetrics m;
  m.queries = queries.rows();
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double truth = scores(i, i);
    int64_t rank = 1;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (scores(i, j) > truth || (j < i && scores(i, j) == truth)) ++rank;
    }
    if (rank == 1) m.prec1 += 1.0;
    m.mrr += 1.0 / static_cast<double>(rank);
  }
  m.prec1 /= static_cast<double>(m.queries);
  m.mrr /= static_cast<double>(m.queries);
  return m;
}

absl::StatusOr<RankMetrics> EvaluateRanking(const RowMatrix& embeddings,
                                            std::span<const Relation> relations,
                                            int batch_size, uint64_t seed) {
  if (batch_size < 2) {
    return absl::InvalidArgumentError("evaluation batch size must be >= 2");
  }
  std::vector<Relation> order(relations.begin(), relations.end());
  Rng rng = MakeRng(seed, "eval", 1);
  Shuffle(order, rng);
  double prec_sum = 0.0;
  double mrr_sum = 0.0;
  int64_t total = 0;
  const auto dim = embeddings.cols();
  for (size_t start = 0; start < order.size(); start += batch_size) {
    const size_t size = std::min<size_t>(batch_size, order.size() - start);
    if (size < 2) break;
    RowMatrix q(size, dim);
    RowMatrix t(size, dim);
    for (size_t i = 0; i < size; ++i) {
      const Relation& r = order[start + i];
      if (r.u < 0 || r.v < 0 || r.u >= embeddings.rows() ||
          r.v >= embeddings.rows()) {
        return absl::InvalidArgumentError("relation endpoint out of range");
      }
      q.row(i) = embeddings.row(r.u);
      t.row(i) = embeddings.row(r.v);
    }
    auto m = RankBatch(q, t);
    if (!m.ok()) return m.status();
    prec_sum += m->prec1 * static_cast<double>(m->queries);
    mrr_sum += m->mrr * static_cast<double>(m->queries);
    total += m->queries;
  }
  if (total == 0) {
    return absl::InvalidArgumentError("need at least 2 relations to rank");
  }
  return RankMetrics{prec_sum / static_cast<double>(total),
                     mrr_sum / static_cast<double>(total), total};
}

absl::StatusOr<F1Scores> ComputeF1(std::span<const int> truth,
                                   std::span<const int> predicted,
                                   int num_classes) {
  if (truth.size() != predicted.size() || truth.empty() || num_classes < 1) {
    return absl::InvalidArgumentError("F1 needs equal, non-empty label lists");
  }
  std::vector<int64_t> tp(num_classes, 0), fp(num_classes, 0),
      fn(num_classes, 0);
  for (size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predicted[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      return absl::InvalidArgumentError(
          absl::StrCat("label outside [0, ", num_classes, ")"));
    }
    if (t == p) {
      ++tp[t];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  auto f1 = [](int64_t tp, int64_t fp, int64_t fn) {
    if (tp == 0) return 0.0;
    const double precision = static_cast<double>(tp) / (tp + fp);
    const double recall = static_cast<double>(tp) / (tp + fn);
    return 2.0 * precision * recall / (precision + recall);
  };
  F1Scores s;
  int64_t all_tp = 0, all_fp = 0, all_fn = 0;
  for (int c = 0; c < num_classes; ++c) {
    s.macro_f1 += f1(tp[c], fp[c], fn[c]);
    all_tp += tp[c];
    all_fp += fp[c];
    all_fn += fn[c];
  }
  s.macro_f1 /= num_classes;
  s.micro_f1 = f1(all_tp, all_fp, all_fn);
  return s;
}

absl::StatusOr<ProbeResult> LinearProbe(const RowMatrix& embeddings,
                                        std::span<const int> labels,
                                        const ProbeOptions& options,
                                        uint64_t seed) {
  if (static_cast<Eigen::Index>(labels.size()) != embeddings.rows()) {
    return absl::InvalidArgumentError("one label per entity required");
  }
  if (options.shots < 1 || options.learning_rates.empty() ||
      options.epochs < 1) {
    return absl::InvalidArgumentError("invalid probe options");
  }
  const int num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  if (num_classes < 2) {
    return absl::InvalidArgumentError("probe needs at least two classes");
  }
  std::vector<std::vector<int64_t>> by_class(num_classes);
  for (size_t e = 0; e < labels.size(); ++e) {
    if (labels[e] >= 0) by_class[labels[e]].push_back(static_cast<int64_t>(e));
  }
  std::vector<int64_t> train, val, test;
  for (int c = 0; c < num_classes; ++c) {
    auto& members = by_class[c];
    if (static_cast<int>(members.size()) < 2 * options.shots) {
      return absl::FailedPreconditionError(absl::StrCat(
          "class ", c, " has ", members.size(), " labeled entities; need ",
          2 * options.shots));
    }
    Rng rng = MakeRng(seed, "eval", 2, static_cast<uint64_t>(c));
    Shuffle(members, rng);
    for (size_t i = 0; i < members.size(); ++i) {
      const auto slot = static_cast<int>(i);
      (slot < options.shots       ? train
       : slot < 2 * options.shots ? val
                                  : test)
          .push_back(members[i]);
    }
  }
  if (test.empty()) {
    return absl::FailedPreconditionError("no labeled entities left to test");
  }

  const auto dim = embeddings.cols();
  auto gather = [&](const std::vector<int64_t>& ids) {
    RowMatrix x(static_cast<Eigen::Index>(ids.size()), dim);
    for (size_t i = 0; i < ids.size(); ++i) x.row(i) = embeddings.row(ids[i]);
    return x;
  };
  RowMatrix x_train = gather(train);
  const RowVector mean = x_train.colwise().mean();
  RowVector scale =
      ((x_train.rowwise() - mean).array().square().colwise().mean())
          .sqrt()
          .matrix();
  for (Eigen::Index j = 0; j < dim; ++j) {
    if (!(scale(j) > 1e-12)) scale(j) = 1.0;
  }
  auto standardize = [&](RowMatrix x) {
    x = (x.rowwise() - mean).array().rowwise() / scale.array();
    return x;
  };
  x_train = standardize(std::move(x_train));
  const RowMatrix x_val = standardize(gather(val));
  const RowMatrix x_test = standardize(gather(test));
  auto labels_of = [&](const std::vector<int64_t>& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (int64_t e : ids) out.push_back(labels[e]);
    return out;
  };
  const std::vector<int> y_train = labels_of(train);
  const std::vector<int> y_val = labels_of(val);
  const std::vector<int> y_test = labels_of(test);
  const auto n = static_cast<double>(train.size());

  auto predict = [](const RowMatrix& w, const RowVector& b,
                    const RowMatrix& x) {
    const RowMatrix logits = (x * w.transpose()).rowwise() + b;
    std::vector<int> out(logits.rows());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      out[i] = ArgMax(logits.row(i));
    }
    return out;
  };

  ProbeResult result;
  double best_val = -1.0;
  RowMatrix best_w;
  RowVector best_b;
  for (double lr : options.learning_rates) {
    RowMatrix w = RowMatrix::Zero(num_classes, dim);
    RowVector b = RowVector::Zero(num_classes);
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
      RowMatrix p = (x_train * w.transpose()).rowwise() + b;
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        p.row(i).array() -= p.row(i).maxCoeff();
        p.row(i) = p.row(i).array().exp().matrix();
        p.row(i) /= p.row(i).sum();
        p(i, y_train[i]) -= 1.0;
      }
      w -= (lr / n) * (p.transpose() * x_train);
      b -= (lr / n) * p.colwise().sum();
    }
    auto val_f1 = ComputeF1(y_val, predict(w, b, x_val), num_classes);
    if (!val_f1.ok()) return val_f1.status();
    if (val_f1->macro_f1 > best_val) {
      best_val = val_f1->macro_f1;
      best_w = w;
      best_b = b;
      result.learning_rate = lr;
    }
  }
  auto test_f1 = ComputeF1(y_test, predict(best_w, best_b, x_test),
                           num_classes);
  if (!test_f1.ok()) return test_f1.status();
  result.test = *test_f1;
  result.num_test = static_cast<int64_t>(test.size());
  return result;
}

double CosineScore(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

std::vector<double> MiaScores(const RowMatrix& embeddings,
                              std::span<const Relation> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const Relation& r : pairs) {
    out.push_back(CosineScore(embeddings.row(r.u).transpose(),
                              embeddings.row(r.v).transpose()));
  }
  return out;
}

std::vector<TprPoint> TprAtFpr(std::span<const double> members,
                               std::span<const double> non_members,
                               std::span<const double> fpr_levels) {
  std::vector<double> neg(non_members.begin(), non_members.end());
  std::sort(neg.begin(), neg.end(), std::greater<>());
  const auto n = static_cast<int64_t>(neg.size());
  std::vector<TprPoint> out;
  for (double f : fpr_levels) {
    TprPoint pt;
    pt.fpr = f;
    // Guard against f * n landing a hair below an integer.
    const auto allowed =
        static_cast<int64_t>(std::floor(f * static_cast<double>(n) + 1e-9));
    pt.threshold = allowed >= n ? std::numeric_limits<double>::lowest()
                                : std::nextafter(neg[allowed],
                                                 std::numeric_limits<
                                                     double>::infinity());
    int64_t hits = 0;
    for (double s : members) hits += s >= pt.threshold ? 1 : 0;
    int64_t false_hits = 0;
    for (double s : neg) false_hits += s >= pt.threshold ? 1 : 0;
    pt.tpr = members.empty() ? 0.0
                             : static_cast<double>(hits) /
                                   static_cast<double>(members.size());
    pt.achieved_fpr =
        n == 0 ? 0.0 : static_cast<double>(false_hits) / static_cast<double>(n);
    out.push_back(pt);
  }
  return out;
}

std::vector<double> SignedRankNullDistribution(
    std::span<const int> doubled_ranks) {
  int total = 0;
  for (int r : doubled_ranks) total += r;
  std::vector<double> counts(total + 1, 0.0);
  counts[0] = 1.0;
  int reach = 0;
  for (int r : doubled_ranks) {
    reach += r;
    for (int s = reach; s >= r; --s) counts[s] += counts[s - r];
  }
  const double denom = std::ldexp(1.0, static_cast<int>(doubled_ranks.size()));
  for (double& c : counts) c /= denom;
  return counts;
}

absl::StatusOr<WilcoxonResult> WilcoxonSignedRank(
    std::span<const double> differences, WilcoxonMethod method) {
  std::vector<double> d;
  for (double x : differences) {
    if (!std::isfinite(x)) {
      return absl::InvalidArgumentError("non-finite difference");
    }
    if (x != 0.0) d.push_back(x);
  }
  if (d.empty()) return absl::InvalidArgumentError("all differences are zero");
  if (d.size() < 5) {
    return absl::InvalidArgumentError(
        absl::StrCat("signed-rank test needs >= 5 non-zero differences, got ",
                     d.size()));
  }
  std::sort(d.begin(), d.end(), [](double a, double b) {
    return std::fabs(a) < std::fabs(b);
  });
  const int n = static_cast<int>(d.size());
  // Doubled average ranks: a tie group covering ranks i+1..j gets i+j+1.
  std::vector<int> doubled(n);
  double tie_term = 0.0;
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && std::fabs(d[j]) == std::fabs(d[i])) ++j;
    for (int k = i; k < j; ++k) doubled[k] = i + j + 1;
    const double t = j - i;
    tie_term += t * t * t - t;
    i = j;
  }
  int64_t observed2 = 0;
  for (int i = 0; i < n; ++i) {
    if (d[i] > 0) observed2 += doubled[i];
  }
  WilcoxonResult r;
  r.n = n;
  r.w_plus = static_cast<double>(observed2) / 2.0;
  const bool exact = method == WilcoxonMethod::kExact ||
                     (method == WilcoxonMethod::kAuto && n <= kWilcoxonExactMax);
  if (exact) {
    const std::vector<double> dist = SignedRankNullDistribution(doubled);
    double p = 0.0;
    for (size_t s = static_cast<size_t>(observed2); s < dist.size(); ++s) {
      p += dist[s];
    }
    r.p = std::min(1.0, p);
    r.exact = true;
    return r;
  }
  const double nn = n;
  const double mean = nn * (nn + 1) / 4.0;
  const double var = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
  if (!(var > 0.0)) {
    r.p = 1.0;
    return r;
  }
  const double z = (r.w_plus - mean - 0.5) / std::sqrt(var);
  r.p = 0.5 * std::erfc(z / std::sqrt(2.0));
  return r;
}

absl::StatusOr<MiaReport> Audit(const RowMatrix& embeddings,
                                std::span<const Relation> members,
                                std::span<const Relation> non_members,
                                int n_pairs, uint64_t seed) {
  if (n_pairs < 1) return absl::InvalidArgumentError("n_pairs must be >= 1");
  if (members.size() < static_cast<size_t>(n_pairs) ||
      non_members.size() < static_cast<size_t>(n_pairs)) {
    return absl::FailedPreconditionError(absl::StrCat(
        "audit needs ", n_pairs, " members and non-members; have ",
        members.size(), " and ", non_members.size()));
  }
  Rng member_rng = MakeRng(seed, "eval", 3);
  Rng non_member_rng = MakeRng(seed, "eval", 4);
  std::vector<Relation> m, nm;
  for (size_t i : SampleIndices(members.size(), n_pairs, member_rng)) {
    m.push_back(members[i]);
  }
  for (size_t i : SampleIndices(non_members.size(), n_pairs, non_member_rng)) {
    nm.push_back(non_members[i]);
  }
  MiaReport report;
  report.n_pairs = n_pairs;
  report.member_scores = MiaScores(embeddings, m);
  report.non_member_scores = MiaScores(embeddings, nm);
  report.tpr_at_fpr =
      TprAtFpr(report.member_scores, report.non_member_scores, kMiaFprLevels);
  std::vector<double> diffs(n_pairs);
  for (int i = 0; i < n_pairs; ++i) {
    diffs[i] = report.member_scores[i] - report.non_member_scores[i];
  }
  auto w = WilcoxonSignedRank(diffs);
  if (!w.ok()) return w.status();
  report.wilcoxon_p = w->p;
  return report;
}

std::vector<HistogramBin> ScoreHistogram(std::span<const double> scores,
                                         int bins, double lo, double hi) {
  std::vector<HistogramBin> out;
  if (bins < 1 || !(hi > lo)) return out;
  const double width = (hi - lo) / bins;
  for (int i = 0; i < bins; ++i) {
    out.push_back({lo + i * width, lo + (i + 1) * width, 0});
  }
  for (double s : scores) {
    auto b = static_cast<int64_t>(std::floor((s - lo) / width));
    b = std::clamp<int64_t>(b, 0, bins - 1);
    ++out[b].count;
  }
  return out;
}

}  // namespace dprel
