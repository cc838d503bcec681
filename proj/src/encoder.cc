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

#include "absl/strings/str_cat.h"
#include "dprel/rng.h"

namespace dprel {
namespace {

bool SameConfig(const EncoderConfig& a, const EncoderConfig& b) {
  return a.vocab_size == b.vocab_size && a.dims == b.dims && a.mode == b.mode &&
         a.rank == b.rank && a.alpha == b.alpha;
}

template <typename M>
bool SameMatrix(const M& a, const M& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

}  // namespace

EncoderParams::EncoderParams(EncoderConfig config, RowMatrix embed,
                             std::vector<DenseBlock> blocks)
    : config_(std::move(config)),
      embed_(std::move(embed)),
      blocks_(std::move(blocks)) {}

double EncoderParams::adapter_scale() const {
  return config_.mode == TrainMode::kAdapter ? config_.alpha / config_.rank
                                             : 0.0;
}

RowMatrix EncoderParams::EffectiveWeight(int block) const {
  const DenseBlock& b = blocks_[block];
  if (config_.mode != TrainMode::kAdapter) return b.weight;
  return b.weight + adapter_scale() * (b.up * b.down);
}

std::vector<GroupShape> EncoderParams::TrainableShapes() const {
  std::vector<GroupShape> shapes;
  if (config_.mode == TrainMode::kFull) {
    shapes.push_back({"embed", embed_.rows(), embed_.cols()});
    for (size_t l = 0; l < blocks_.size(); ++l) {
      const DenseBlock& b = blocks_[l];
      shapes.push_back({absl::StrCat("weight_", l), b.weight.rows(),
                        b.weight.cols()});
      shapes.push_back({absl::StrCat("bias_", l), 1, b.bias.size()});
    }
  } else {
    for (size_t l = 0; l < blocks_.size(); ++l) {
      const DenseBlock& b = blocks_[l];
      shapes.push_back({absl::StrCat("down_", l), b.down.rows(), b.down.cols()});
      shapes.push_back({absl::StrCat("up_", l), b.up.rows(), b.up.cols()});
    }
  }
  return shapes;
}

std::vector<Eigen::Map<RowMatrix>> EncoderParams::TrainableViews() {
  std::vector<Eigen::Map<RowMatrix>> views;
  auto add = [&views](auto& m, Eigen::Index rows, Eigen::Index cols) {
    views.emplace_back(m.data(), rows, cols);
  };
  if (config_.mode == TrainMode::kFull) {
    add(embed_, embed_.rows(), embed_.cols());
    for (DenseBlock& b : blocks_) {
      add(b.weight, b.weight.rows(), b.weight.cols());
      add(b.bias, 1, b.bias.size());
    }
  } else {
    for (DenseBlock& b : blocks_) {
      add(b.down, b.down.rows(), b.down.cols());
      add(b.up, b.up.rows(), b.up.cols());
    }
  }
  return views;
}

std::vector<Eigen::Map<const RowMatrix>> EncoderParams::TrainableViews() const {
  std::vector<Eigen::Map<const RowMatrix>> views;
  auto add = [&views](const auto& m, Eigen::Index rows, Eigen::Index cols) {
    views.emplace_back(m.data(), rows, cols);
  };
  if (config_.mode == TrainMode::kFull) {
    add(embed_, embed_.rows(), embed_.cols());
    for (const DenseBlock& b : blocks_) {
      add(b.weight, b.weight.rows(), b.weight.cols());
      add(b.bias, 1, b.bias.size());
    }
  } else {
    for (const DenseBlock& b : blocks_) {
      add(b.down, b.down.rows(), b.down.cols());
      add(b.up, b.up.rows(), b.up.cols());
    }
  }
  return views;
}

bool EncoderParams::AllFinite() const {
  if (!embed_.allFinite()) return false;
  for (const DenseBlock& b : blocks_) {
    if (!b.weight.allFinite() || !b.bias.allFinite() || !b.down.allFinite() ||
        !b.up.allFinite()) {
      return false;
    }
  }
  return true;
}

bool operator==(const EncoderParams& a, const EncoderParams& b) {
  if (!SameConfig(a.config_, b.config_) || !SameMatrix(a.embed_, b.embed_) ||
      a.blocks_.size() != b.blocks_.size()) {
    return false;
  }
  for (size_t l = 0; l < a.blocks_.size(); ++l) {
    const DenseBlock& x = a.blocks_[l];
    const DenseBlock& y = b.blocks_[l];
    if (!SameMatrix(x.weight, y.weight) || !SameMatrix(x.bias, y.bias) ||
        !SameMatrix(x.down, y.down) || !SameMatrix(x.up, y.up)) {
      return false;
    }
  }
  return true;
}

absl::Status ValidateConfig(const EncoderConfig& config) {
  if (config.vocab_size < 2) {
    return absl::InvalidArgumentError("vocab_size must be >= 2");
  }
  if (config.dims.size() < 2) {
    return absl::InvalidArgumentError(
        "need an embedding width and at least one block");
  }
  for (int d : config.dims) {
    if (d < 1) return absl::InvalidArgumentError("layer widths must be >= 1");
  }
  if (config.mode == TrainMode::kAdapter &&
      (config.rank < 1 || !(config.alpha > 0.0))) {
    return absl::InvalidArgumentError("adapter mode needs rank >= 1, alpha > 0");
  }
  return absl::OkStatus();
}

absl::StatusOr<EncoderParams> InitParams(const EncoderConfig& config,
                                         uint64_t seed) {
  if (absl::Status s = ValidateConfig(config); !s.ok()) return s;
  Rng rng = MakeRng(seed, "init");
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](auto& m, double scale) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal(rng);
  };
  RowMatrix embed(config.vocab_size, config.dims[0]);
  fill(embed, 1.0);
  embed.row(kPadId).setZero();
  std::vector<DenseBlock> blocks(config.num_blocks());
  for (int l = 0; l < config.num_blocks(); ++l) {
    const int d = config.dims[l];
    const int p = config.dims[l + 1];
    DenseBlock& b = blocks[l];
    b.weight.resize(p, d);
    fill(b.weight, 1.0 / std::sqrt(static_cast<double>(d)));
    b.bias = RowVector::Zero(p);
    if (config.mode == TrainMode::kAdapter) {
      b.down.resize(config.rank, d);
      fill(b.down, 1.0 / std::sqrt(static_cast<double>(d)));
      b.up = RowMatrix::Zero(p, config.rank);
    }
  }
  return EncoderParams(config, std::move(embed), std::move(blocks));
}

EntityTrace Encode(const EncoderParams& params, const TokenSeq& tokens) {
  const EncoderConfig& cfg = params.config();
  const bool adapter = cfg.mode == TrainMode::kAdapter;
  const double scale = params.adapter_scale();
  const int n = tokens.length;
  const int num_blocks = cfg.num_blocks();

  EntityTrace trace;
  trace.tokens.assign(tokens.ids.begin(), tokens.ids.begin() + n);
  trace.inputs.resize(num_blocks);
  trace.outputs.resize(num_blocks);
  if (adapter) trace.adapter_codes.resize(num_blocks);

  RowMatrix x(n, cfg.dims[0]);
  for (int t = 0; t < n; ++t) x.row(t) = params.embed().row(trace.tokens[t]);
  for (int l = 0; l < num_blocks; ++l) {
    const DenseBlock& b = params.blocks()[l];
    RowMatrix out = x * b.weight.transpose();
    if (adapter) {
      trace.adapter_codes[l] = x * b.down.transpose();
      out.noalias() += scale * (trace.adapter_codes[l] * b.up.transpose());
    }
    out.rowwise() += b.bias;
    if (l + 1 < num_blocks) out = out.array().tanh().matrix();
    trace.inputs[l] = std::move(x);
    x = out;
    trace.outputs[l] = std::move(out);
  }
  trace.embedding = x.colwise().mean().transpose();
  return trace;
}

Eigen::Index LowRankGradCache::num_rows() const {
  if (embedding) return embedding->row_grads.rows();
  return dense.empty() ? 0 : dense.front().inputs.rows();
}

absl::StatusOr<LowRankGradCache> BackwardEntities(
    const EncoderParams& params, std::span<const EntityId> entities,
    const EntityGradMap& loss_grads, const TraceMap& traces) {
  const EncoderConfig& cfg = params.config();
  const bool adapter = cfg.mode == TrainMode::kAdapter;
  const double scale = params.adapter_scale();
  const int num_blocks = cfg.num_blocks();

  std::vector<const EntityTrace*> entity_traces;
  Eigen::Index total = 0;
  for (EntityId e : entities) {
    auto it = traces.find(e);
    if (it == traces.end() || it->second == nullptr) {
      return absl::FailedPreconditionError(
          absl::StrCat("missing forward trace for entity ", e));
    }
    entity_traces.push_back(it->second);
    total += it->second->length();
  }

  LowRankGradCache cache;
  cache.shapes = params.TrainableShapes();
  if (!adapter) {
    cache.embedding.emplace();
    cache.embedding->group = 0;
    cache.embedding->token_ids.reserve(total);
    cache.embedding->row_grads.resize(total, cfg.dims[0]);
    for (int l = 0; l < num_blocks; ++l) {
      DenseFactor f;
      f.group = 1 + 2 * l;
      f.bias_group = 2 + 2 * l;
      f.inputs.resize(total, cfg.dims[l]);
      f.output_grads.resize(total, cfg.dims[l + 1]);
      cache.dense.push_back(std::move(f));
    }
  } else {
    for (int l = 0; l < num_blocks; ++l) {
      DenseFactor down;
      down.group = 2 * l;
      down.inputs.resize(total, cfg.dims[l]);
      down.output_grads.resize(total, cfg.rank);
      DenseFactor up;
      up.group = 2 * l + 1;
      up.inputs.resize(total, cfg.rank);
      up.output_grads.resize(total, cfg.dims[l + 1]);
      cache.dense.push_back(std::move(down));
      cache.dense.push_back(std::move(up));
    }
  }

  Eigen::Index offset = 0;
  for (size_t i = 0; i < entities.size(); ++i) {
    const EntityTrace& trace = *entity_traces[i];
    const Eigen::Index n = trace.length();
    RowMatrix grad_out = RowMatrix::Zero(n, cfg.output_dim());
    if (auto it = loss_grads.find(entities[i]); it != loss_grads.end()) {
      grad_out.rowwise() = it->second.transpose() / static_cast<double>(n);
    }
    for (int l = num_blocks - 1; l >= 0; --l) {
      const DenseBlock& b = params.blocks()[l];
      RowMatrix g = grad_out;
      if (l + 1 < num_blocks) {
        g.array() *= 1.0 - trace.outputs[l].array().square();
      }
      RowMatrix g_code;
      if (adapter) {
        g_code = scale * (g * b.up);
        DenseFactor& down = cache.dense[2 * l];
        DenseFactor& up = cache.dense[2 * l + 1];
        down.inputs.middleRows(offset, n) = trace.inputs[l];
        down.output_grads.middleRows(offset, n) = g_code;
        up.inputs.middleRows(offset, n) = trace.adapter_codes[l];
        up.output_grads.middleRows(offset, n) = scale * g;
      } else {
        DenseFactor& f = cache.dense[l];
        f.inputs.middleRows(offset, n) = trace.inputs[l];
        f.output_grads.middleRows(offset, n) = g;
      }
      if (l == 0 && adapter) break;  // frozen embedding
      grad_out = g * b.weight;
      if (adapter) grad_out.noalias() += g_code * b.down;
    }
    if (!adapter) {
      cache.embedding->row_grads.middleRows(offset, n) = grad_out;
      cache.embedding->token_ids.insert(cache.embedding->token_ids.end(),
                                        trace.tokens.begin(),
                                        trace.tokens.end());
    }
    offset += n;
  }
  return cache;
}

absl::StatusOr<LowRankGradCache> BackwardTuple(const EncoderParams& params,
                                               const RelationTuple& tuple,
                                               const EntityGradMap& loss_grads,
                                               const TraceMap& traces) {
  const std::vector<EntityId> entities = DistinctEntities(tuple);
  return BackwardEntities(params, entities, loss_grads, traces);
}

}  // namespace dprel
