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

#ifndef DPREL_ENCODER_H_
#define DPREL_ENCODER_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "Eigen/Core"
#include "absl/status/statusor.h"
#include "dprel/graph_store.h"
#include "dprel/sampler.h"

namespace dprel {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class TrainMode { kFull, kAdapter };

// Embedding -> L position-wise dense blocks (tanh on all but the last) ->
// mean pool over real tokens.
struct EncoderConfig {
  int vocab_size = 0;
  // dims[0] is the embedding width; block l maps dims[l] -> dims[l + 1].
  std::vector<int> dims;
  TrainMode mode = TrainMode::kFull;
  int rank = 0;        // adapter rank r
  double alpha = 16.0;  // adapter scale numerator; delta W = (alpha / r) B A

  int num_blocks() const { return static_cast<int>(dims.size()) - 1; }
  int output_dim() const { return dims.back(); }
};

struct DenseBlock {
  RowMatrix weight;  // p x d
  RowVector bias;    // p
  RowMatrix down;    // adapter A: r x d (adapter mode only)
  RowMatrix up;      // adapter B: p x r (adapter mode only)
};

// Shape of one trainable parameter group.
struct GroupShape {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

class EncoderParams {
 public:
  EncoderParams() = default;
  EncoderParams(EncoderConfig config, RowMatrix embed,
                std::vector<DenseBlock> blocks);

  const EncoderConfig& config() const { return config_; }
  const RowMatrix& embed() const { return embed_; }
  RowMatrix& mutable_embed() { return embed_; }
  const std::vector<DenseBlock>& blocks() const { return blocks_; }
  std::vector<DenseBlock>& mutable_blocks() { return blocks_; }

  double adapter_scale() const;
  // W + (alpha / r) B A in adapter mode, W otherwise.
  RowMatrix EffectiveWeight(int block) const;

  // Trainable groups in their fixed order:
  //   full:    embed, weight_0, bias_0, weight_1, bias_1, ...
  //   adapter: down_0, up_0, down_1, up_1, ...
  // Bias groups are 1 x p.
  std::vector<GroupShape> TrainableShapes() const;
  std::vector<Eigen::Map<RowMatrix>> TrainableViews();
  std::vector<Eigen::Map<const RowMatrix>> TrainableViews() const;

  bool AllFinite() const;

  friend bool operator==(const EncoderParams& a, const EncoderParams& b);

 private:
  EncoderConfig config_;
  RowMatrix embed_;
  std::vector<DenseBlock> blocks_;
};

absl::Status ValidateConfig(const EncoderConfig& config);

// N(0, 1/fan_in) weights, N(0, 1) embedding rows (a one-hot lookup has
// fan_in 1) with the pad row zeroed, zero biases. Adapter mode draws A with
// scale 1/sqrt(d) and sets B = 0 so the initial adapter delta vanishes.
absl::StatusOr<EncoderParams> InitParams(const EncoderConfig& config,
                                         uint64_t seed);

// Forward activations of one entity over its real tokens (n = length).
struct EntityTrace {
  std::vector<TokenId> tokens;           // real tokens only
  std::vector<RowMatrix> inputs;         // per block: n x d_l
  std::vector<RowMatrix> outputs;        // per block, post-activation: n x p_l
  std::vector<RowMatrix> adapter_codes;  // per block: n x r (inputs * A^T)
  Vector embedding;                      // mean of last block output

  int length() const { return static_cast<int>(tokens.size()); }
};

EntityTrace Encode(const EncoderParams& params, const TokenSeq& tokens);

// Dense-layer factor: the parameter gradient is output_grads^T * inputs, and
// the bias gradient (if any) is the column sum of output_grads.
struct DenseFactor {
  int group = -1;
  int bias_group = -1;  // -1 when the layer has no trainable bias
  RowMatrix inputs;        // T x d
  RowMatrix output_grads;  // T x p
};

// Embedding factor: row i of row_grads is added to embedding row token_ids[i].
struct EmbeddingFactor {
  int group = -1;
  std::vector<TokenId> token_ids;
  RowMatrix row_grads;  // T x d_0
};

// Per-tuple gradient in stacked low-rank form. T is the total number of real
// tokens over the tuple's distinct entities; rows of every factor are aligned
// token for token.
struct LowRankGradCache {
  std::vector<GroupShape> shapes;
  std::optional<EmbeddingFactor> embedding;
  std::vector<DenseFactor> dense;

  Eigen::Index num_rows() const;
};

using EntityGradMap = std::unordered_map<EntityId, Vector>;
using TraceMap = std::unordered_map<EntityId, const EntityTrace*>;

// Reverse pass through the encoder for every entity of `entities`, seeded by
// the loss gradient with respect to each pooled embedding. Entities absent
// from `loss_grads` contribute zero rows.
absl::StatusOr<LowRankGradCache> BackwardEntities(
    const EncoderParams& params, std::span<const EntityId> entities,
    const EntityGradMap& loss_grads, const TraceMap& traces);

// As above over DistinctEntities(tuple); an entity shared by several
// relations of the tuple is encoded once and receives the summed gradient.
absl::StatusOr<LowRankGradCache> BackwardTuple(const EncoderParams& params,
                                               const RelationTuple& tuple,
                                               const EntityGradMap& loss_grads,
                                               const TraceMap& traces);

}  // namespace dprel

#endif  // DPREL_ENCODER_H_
