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

#ifndef DPREL_TRAINER_H_
#define DPREL_TRAINER_H_

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "dprel/encoder.h"
#include "dprel/graph_store.h"
#include "dprel/objective.h"
#include "dprel/privacy_engine.h"
#include "dprel/sampler.h"

namespace dprel {

enum class OptimizerKind { kSgd, kAdam };

inline constexpr double kNoClipping = std::numeric_limits<double>::infinity();

struct TrainConfig {
  EncoderConfig encoder;
  LossConfig loss;
  int negatives = 8;         // k
  int expected_batch = 256;  // b
  int64_t steps = 2000;      // T
  // Overrides q = b / |E_train|; the divisor in the update stays b.
  std::optional<double> sampling_ratio;
  double clip_norm = 1.0;  // kNoClipping disables clipping (requires sigma 0)
  double sigma = 0.0;
  // When set, sigma is calibrated from it and must not be given as well.
  std::optional<double> target_epsilon;
  double delta = 0.0;  // 0 selects 1 / |E_train|
  NoisePlacement noise_placement = NoisePlacement::kOnce;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  // total_steps == 0 is replaced by `steps`.
  LrSchedule schedule{ScheduleKind::kConstant, 1e-2, 0, 0};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  int threads = 1;
};

struct StepRecord {
  int64_t step = 0;
  int64_t realized_batch = 0;
  double loss = 0.0;  // mean tuple loss of the batch; 0 for an empty batch
  double grad_norm_median = 0.0;  // unclipped per-tuple norms
  double epsilon_so_far = 0.0;
  double learning_rate = 0.0;
};

inline constexpr char kAccountantKind[] = "rdp";

struct PrivacyReport {
  double clip_norm = 0.0;
  double sigma = 0.0;
  double q = 0.0;
  int64_t steps = 0;
  double delta = 0.0;
  double epsilon = 0.0;  // +inf for a run without noise
  double best_order = 0.0;
  std::string accountant_kind = kAccountantKind;
};

struct TrainResult {
  EncoderParams params;
  PrivacyReport report;
  std::vector<StepRecord> log;
};

// Unclipped per-tuple gradients of one step, in batch order.
struct StepGradients {
  Batch batch;
  std::vector<FlatGrad> tuple_grads;
  std::vector<double> losses;
};

// Resolves defaults (delta, q, schedule length) and calibrates sigma when a
// target epsilon is given. Returns the effective configuration.
absl::StatusOr<TrainConfig> ResolveConfig(const GraphSplit& split,
                                          const TrainConfig& config);

// Samples the batch of `step` and computes every tuple's gradient. Each
// distinct entity of the batch is encoded once.
absl::StatusOr<StepGradients> ComputeStepGradients(
    const EncoderParams& params, const TextAttributedGraph& graph,
    const GraphSplit& split, const TrainConfig& config, int64_t step);

using StepCallback = std::function<void(const StepRecord&)>;

// Runs steps 1..T of: sample, encode, loss, backward, per-tuple gradients,
// clip + sum + noise, optimizer update. Aborts on a non-finite loss or
// gradient. `config` is resolved internally.
absl::StatusOr<TrainResult> Train(const TextAttributedGraph& graph,
                                  const GraphSplit& split,
                                  const TrainConfig& config,
                                  const StepCallback& on_step = nullptr);

}  // namespace dprel

#endif  // DPREL_TRAINER_H_
