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

#include "dprel/objective.h"

#include <algorithm>
#include <cmath>

#include "absl/strings/str_cat.h"

namespace dprel {

absl::StatusOr<double> Score(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("score of vectors with sizes ", a.size(), " and ",
                     b.size()));
  }
  return a.dot(b);
}

LossAndGrad InfoNce(const TupleScores& scores, double temperature) {
  const size_t k = scores.negatives.size();
  std::vector<double> logits(k + 1);
  logits[0] = scores.positive / temperature;
  for (size_t j = 0; j < k; ++j) logits[j + 1] = scores.negatives[j] / temperature;
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& z : logits) {
    z = std::exp(z - top);
    total += z;
  }
  LossAndGrad out;
  out.loss = std::log(total) - (scores.positive / temperature - top);
  out.dz.resize(k + 1);
  for (size_t j = 0; j <= k; ++j) out.dz[j] = logits[j] / total / temperature;
  out.dz[0] -= 1.0 / temperature;
  return out;
}

LossAndGrad Hinge(const TupleScores& scores, double margin) {
  LossAndGrad out;
  out.dz.assign(scores.negatives.size() + 1, 0.0);
  for (size_t j = 0; j < scores.negatives.size(); ++j) {
    const double slack = margin + scores.negatives[j] - scores.positive;
    if (slack > 0.0) {
      out.loss += slack;
      out.dz[j + 1] = 1.0;
      out.dz[0] -= 1.0;
    }
  }
  return out;
}

LossAndGrad TupleLoss(const TupleScores& scores, const LossConfig& config) {
  return config.kind == LossKind::kInfoNce ? InfoNce(scores, config.temperature)
                                           : Hinge(scores, config.margin);
}

TupleLossGrads ComputeTupleLossGrads(const RelationTuple& tuple,
                                     const EmbeddingLookup& embedding,
                                     const LossConfig& config) {
  const Vector& h_anchor = embedding(tuple.anchor());
  const Vector& h_partner = embedding(tuple.partner());
  TupleScores scores;
  scores.positive = h_anchor.dot(h_partner);
  scores.negatives.reserve(tuple.negatives.size());
  for (EntityId v : tuple.negatives) {
    scores.negatives.push_back(h_anchor.dot(embedding(v)));
  }
  const LossAndGrad lg = TupleLoss(scores, config);

  TupleLossGrads out;
  out.loss = lg.loss;
  auto accumulate = [&out](EntityId e, const Vector& g) {
    auto [it, inserted] = out.grads.try_emplace(e, g);
    if (!inserted) it->second += g;
  };
  Vector anchor_grad = lg.dz[0] * h_partner;
  accumulate(tuple.partner(), lg.dz[0] * h_anchor);
  for (size_t j = 0; j < tuple.negatives.size(); ++j) {
    const Vector& h_neg = embedding(tuple.negatives[j]);
    anchor_grad += lg.dz[j + 1] * h_neg;
    accumulate(tuple.negatives[j], lg.dz[j + 1] * h_anchor);
  }
  accumulate(tuple.anchor(), anchor_grad);
  return out;
}

}  // namespace dprel
