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

#ifndef DPREL_OBJECTIVE_H_
#define DPREL_OBJECTIVE_H_

#include <functional>
#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "dprel/encoder.h"
#include "dprel/sampler.h"

namespace dprel {

enum class LossKind { kInfoNce, kHinge };

struct LossConfig {
  LossKind kind = LossKind::kInfoNce;
  double temperature = 1.0;  // InfoNCE
  double margin = 1.0;       // Hinge
};

// Relation scores of one tuple: the positive first, then one per negative.
struct TupleScores {
  double positive = 0.0;
  std::vector<double> negatives;
};

struct LossAndGrad {
  double loss = 0.0;
  // d loss / d z, positive first.
  std::vector<double> dz;
};

// Dot product; fails on a dimension mismatch.
absl::StatusOr<double> Score(const Vector& a, const Vector& b);

// -ln softmax(z / tau)[positive], computed with max subtraction.
LossAndGrad InfoNce(const TupleScores& scores, double temperature);

// Sum over negatives of max(0, margin + z_neg - z_pos); the subgradient at the
// kink is taken as 0.
LossAndGrad Hinge(const TupleScores& scores, double margin);

LossAndGrad TupleLoss(const TupleScores& scores, const LossConfig& config);

using EmbeddingLookup = std::function<const Vector&(EntityId)>;

struct TupleLossGrads {
  double loss = 0.0;
  EntityGradMap grads;  // d loss / d h_e for every distinct entity
};

// Scores every relation (anchor, x) of the tuple, evaluates the loss, and
// chains d loss / d z back to the pooled embeddings.
TupleLossGrads ComputeTupleLossGrads(const RelationTuple& tuple,
                                     const EmbeddingLookup& embedding,
                                     const LossConfig& config);

}  // namespace dprel

#endif  // DPREL_OBJECTIVE_H_
