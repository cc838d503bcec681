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

#include "dprel/trainer.h"

#include <algorithm>
#include <cmath>

#include "absl/strings/str_cat.h"
#include "dprel/accountant.h"
#include "dprel/parallel.h"
#include "dprel/rng.h"

namespace dprel {

absl::StatusOr<TrainConfig> ResolveConfig(const GraphSplit& split,
                                          const TrainConfig& config) {
  TrainConfig c = config;
  if (absl::Status s = ValidateConfig(c.encoder); !s.ok()) return s;
  if (split.train.empty()) {
    return absl::InvalidArgumentError("no training relations");
  }
  if (c.steps < 0) return absl::InvalidArgumentError("steps must be >= 0");
  if (c.expected_batch < 1 ||
      c.expected_batch > static_cast<int64_t>(split.train.size())) {
    return absl::InvalidArgumentError(
        absl::StrCat("expected batch ", c.expected_batch, " outside [1, ",
                     split.train.size(), "]"));
  }
  if (c.negatives < 1 || split.num_entities < c.negatives + 2) {
    return absl::InvalidArgumentError(absl::StrCat(
        "cannot draw ", c.negatives, " negatives among ", split.num_entities,
        " entities"));
  }
  if (!(c.clip_norm > 0.0)) {
    return absl::InvalidArgumentError("clip norm must be positive");
  }
  if (!(c.sigma >= 0.0) || !std::isfinite(c.sigma)) {
    return absl::InvalidArgumentError("sigma must be finite and >= 0");
  }
  if (c.threads < 1) return absl::InvalidArgumentError("threads must be >= 1");
  if (c.delta == 0.0) c.delta = 1.0 / static_cast<double>(split.train.size());
  if (!(c.delta > 0.0 && c.delta < 1.0)) {
    return absl::InvalidArgumentError("delta must lie in (0, 1)");
  }
  if (!c.sampling_ratio) {
    c.sampling_ratio = static_cast<double>(c.expected_batch) /
                       static_cast<double>(split.train.size());
  }
  if (!(*c.sampling_ratio > 0.0 && *c.sampling_ratio <= 1.0)) {
    return absl::InvalidArgumentError("sampling ratio must lie in (0, 1]");
  }
  if (c.schedule.total_steps == 0) c.schedule.total_steps = c.steps;
  if (c.target_epsilon) {
    if (c.sigma > 0.0) {
      return absl::InvalidArgumentError(
          "target epsilon and sigma are mutually exclusive");
    }
    if (!std::isfinite(c.clip_norm)) {
      return absl::InvalidArgumentError("a privacy target needs clipping");
    }
    if (c.steps > 0) {
      auto sigma = CalibrateSigma(*c.target_epsilon, c.delta,
                                  *c.sampling_ratio, c.steps);
      if (!sigma.ok()) return sigma.status();
      c.sigma = *sigma;
    }
    c.target_epsilon.reset();
  }
  if (c.sigma > 0.0 && !std::isfinite(c.clip_norm)) {
    return absl::InvalidArgumentError("noise needs a finite clip norm");
  }
  return c;
}

absl::StatusOr<StepGradients> ComputeStepGradients(
    const EncoderParams& params, const TextAttributedGraph& graph,
    const GraphSplit& split, const TrainConfig& config, int64_t step) {
  const double q =
      config.sampling_ratio
          ? *config.sampling_ratio
          : static_cast<double>(config.expected_batch) /
                static_cast<double>(std::max<size_t>(1, split.train.size()));
  auto batch =
      SampleBatchWithRatio(split, step, q, config.negatives, config.seed);
  if (!batch.ok()) return batch.status();

  // Encode each entity of the batch once.
  std::vector<int> slot(graph.num_entities(), -1);
  std::vector<EntityId> entities;
  for (const RelationTuple& t : batch->tuples) {
    for (EntityId e : DistinctEntities(t)) {
      if (slot[e] < 0) {
        slot[e] = static_cast<int>(entities.size());
        entities.push_back(e);
      }
    }
  }
  std::vector<EntityTrace> traces(entities.size());
  ParallelFor(static_cast<int64_t>(entities.size()), config.threads,
              [&](int64_t i) {
                traces[i] = Encode(params, graph.attributes(entities[i]));
              });
  const EmbeddingLookup lookup = [&](EntityId e) -> const Vector& {
    return traces[slot[e]].embedding;
  };

  const size_t n = batch->tuples.size();
  StepGradients out;
  out.tuple_grads.resize(n);
  out.losses.resize(n);
  std::vector<absl::Status> status(n);
  ParallelFor(static_cast<int64_t>(n), config.threads, [&](int64_t i) {
    const RelationTuple& tuple = batch->tuples[i];
    TupleLossGrads lg = ComputeTupleLossGrads(tuple, lookup, config.loss);
    TraceMap trace_map;
    for (EntityId e : DistinctEntities(tuple)) trace_map[e] = &traces[slot[e]];
    auto cache = BackwardTuple(params, tuple, lg.grads, trace_map);
    if (!cache.ok()) {
      status[i] = cache.status();
      return;
    }
    out.losses[i] = lg.loss;
    out.tuple_grads[i] = TupleGradOuter(*cache);
  });
  for (size_t i = 0; i < n; ++i) {
    if (!status[i].ok()) return status[i];
    const Relation& r = batch->tuples[i].positive;
    if (!std::isfinite(out.losses[i]) || !out.tuple_grads[i].AllFinite()) {
      return absl::InternalError(absl::StrCat(
          "non-finite ", std::isfinite(out.losses[i]) ? "gradient" : "loss",
          " at step ", step, " for tuple (", r.u, ", ", r.v,
          "), loss = ", out.losses[i]));
    }
  }
  out.batch = std::move(*batch);
  return out;
}

absl::StatusOr<TrainResult> Train(const TextAttributedGraph& graph,
                                  const GraphSplit& split,
                                  const TrainConfig& config,
                                  const StepCallback& on_step) {
  auto resolved = ResolveConfig(split, config);
  if (!resolved.ok()) return resolved.status();
  const TrainConfig& c = *resolved;
  if (c.encoder.vocab_size != graph.vocab_size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("encoder vocabulary ", c.encoder.vocab_size,
                     " differs from the graph's ", graph.vocab_size()));
  }
  if (split.num_entities != graph.num_entities()) {
    return absl::InvalidArgumentError("split and graph entity counts differ");
  }
  auto init = InitParams(c.encoder, c.seed);
  if (!init.ok()) return init.status();

  TrainResult result;
  result.params = std::move(*init);
  const std::vector<GroupShape> shapes = result.params.TrainableShapes();
  AdamState adam = AdamState::Zeros(shapes);
  adam.beta1 = c.beta1;
  adam.beta2 = c.beta2;
  adam.eps = c.adam_eps;
  RdpAccountant accountant;
  const double q = *c.sampling_ratio;
  const bool noisy = c.sigma > 0.0;

  for (int64_t t = 1; t <= c.steps; ++t) {
    auto grads = ComputeStepGradients(result.params, graph, split, c, t);
    if (!grads.ok()) return grads.status();
    Rng noise_rng = MakeRng(c.seed, "noise", static_cast<uint64_t>(t));
    auto private_grad =
        PrivatizeBatch(grads->tuple_grads, shapes, c.clip_norm, c.sigma,
                       c.expected_batch, noise_rng, c.noise_placement);
    if (!private_grad.ok()) return private_grad.status();
    const double lr = c.schedule.At(t);
    if (c.optimizer == OptimizerKind::kAdam) {
      DpAdamStep(adam, result.params, *private_grad, lr);
    } else {
      DpSgdStep(result.params, *private_grad, lr);
    }
    if (!result.params.AllFinite()) {
      return absl::InternalError(
          absl::StrCat("parameters became non-finite at step ", t));
    }

    StepRecord rec;
    rec.step = t;
    rec.realized_batch = static_cast<int64_t>(grads->tuple_grads.size());
    rec.learning_rate = lr;
    if (rec.realized_batch > 0) {
      double total = 0.0;
      for (double l : grads->losses) total += l;
      rec.loss = total / static_cast<double>(rec.realized_batch);
      std::vector<double> norms;
      norms.reserve(grads->tuple_grads.size());
      for (const FlatGrad& g : grads->tuple_grads) norms.push_back(g.Norm());
      std::sort(norms.begin(), norms.end());
      const size_t mid = norms.size() / 2;
      rec.grad_norm_median = norms.size() % 2 == 1
                                 ? norms[mid]
                                 : 0.5 * (norms[mid - 1] + norms[mid]);
    }
    if (noisy) {
      if (absl::Status s = accountant.Compose(q, c.sigma, 1); !s.ok()) return s;
      auto eps = accountant.ToEpsilon(c.delta);
      if (!eps.ok()) return eps.status();
      rec.epsilon_so_far = eps->epsilon;
    } else {
      rec.epsilon_so_far = std::numeric_limits<double>::infinity();
    }
    if (on_step) on_step(rec);
    result.log.push_back(rec);
  }

  PrivacyReport& report = result.report;
  report.clip_norm = c.clip_norm;
  report.sigma = c.sigma;
  report.q = q;
  report.steps = c.steps;
  report.delta = c.delta;
  if (c.steps == 0) {
    report.epsilon = 0.0;
  } else if (!noisy) {
    report.epsilon = std::numeric_limits<double>::infinity();
  } else {
    auto eps = accountant.ToEpsilon(c.delta);
    if (!eps.ok()) return eps.status();
    report.epsilon = eps->epsilon;
    report.best_order = eps->order;
  }
  return result;
}

}  // namespace dprel
