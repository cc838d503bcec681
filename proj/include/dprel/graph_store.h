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

#ifndef DPREL_GRAPH_STORE_H_
#define DPREL_GRAPH_STORE_H_

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace dprel {

using EntityId = int32_t;
using TokenId = int32_t;

// Vocabulary index 0 is reserved for padding and never produced by
// tokenization.
inline constexpr TokenId kPadId = 0;
inline constexpr int kDefaultMaxLen = 32;

// Fixed-width token sequence. `ids.size()` is the padded width; positions at
// or beyond `length` hold kPadId.
struct TokenSeq {
  std::vector<TokenId> ids;
  int length = 0;

  std::span<const TokenId> real() const {
    return std::span<const TokenId>(ids).first(length);
  }

  // Truncates `tokens` to `max_len` and pads the remainder.
  static TokenSeq FromTokens(std::span<const TokenId> tokens, int max_len);

  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

// Undirected relation stored in canonical (min, max) order.
struct Relation {
  EntityId u = 0;
  EntityId v = 0;

  // Returns nullopt for self-loops.
  static std::optional<Relation> Make(EntityId a, EntityId b);

  auto operator<=>(const Relation&) const = default;
};

// Entity set V = {0..N-1}, one token sequence per entity, and a deduplicated
// set of undirected relations. Immutable once built.
class TextAttributedGraph {
 public:
  // Validates and canonicalizes. Relations may contain duplicates in either
  // orientation; they are collapsed. Fails on dangling endpoints, self-loops,
  // out-of-vocabulary tokens, or an empty relation set.
  static absl::StatusOr<TextAttributedGraph> Create(
      std::vector<TokenSeq> attributes, std::vector<Relation> relations,
      int vocab_size);

  int num_entities() const { return static_cast<int>(attributes_.size()); }
  int vocab_size() const { return vocab_size_; }
  int max_len() const { return max_len_; }
  const TokenSeq& attributes(EntityId id) const { return attributes_[id]; }
  const std::vector<TokenSeq>& all_attributes() const { return attributes_; }
  // Sorted ascending by (min, max).
  const std::vector<Relation>& relations() const { return relations_; }
  bool HasRelation(EntityId a, EntityId b) const;

  friend bool operator==(const TextAttributedGraph&,
                         const TextAttributedGraph&) = default;

 private:
  TextAttributedGraph() = default;

  std::vector<TokenSeq> attributes_;
  std::vector<Relation> relations_;
  int vocab_size_ = 0;
  int max_len_ = kDefaultMaxLen;
};

struct GraphSplit {
  int num_entities = 0;
  std::vector<Relation> train;  // sorted
  std::vector<Relation> eval;   // sorted
  // Optional entity labels for probing; empty when absent, -1 = unlabeled.
  std::vector<int> labels;
};

enum class EntityFormat { kTokenIds, kRawText };

struct LoadOptions {
  EntityFormat format = EntityFormat::kTokenIds;
  // Required for kRawText: lines "token<TAB>id" with id >= 1.
  std::string vocab_path;
  int max_len = kDefaultMaxLen;
  // 0 infers max(token id) + 1 (token-id mode) or max(vocab id) + 1.
  int vocab_size = 0;
};

using Vocabulary = std::unordered_map<std::string, TokenId>;

absl::StatusOr<Vocabulary> LoadVocabulary(const std::string& path);

absl::StatusOr<TextAttributedGraph> LoadGraph(const std::string& entities_path,
                                              const std::string& relations_path,
                                              const LoadOptions& options = {});

// Canonical byte-stable output: entities ascending by id as
// "id<TAB>t1,t2,..." (real tokens only), relations ascending as "u<TAB>v".
absl::Status SaveGraph(const TextAttributedGraph& graph,
                       const std::string& entities_path,
                       const std::string& relations_path);

absl::StatusOr<std::vector<Relation>> LoadRelations(const std::string& path,
                                                    int num_entities);
absl::Status SaveRelations(std::span<const Relation> relations,
                           const std::string& path);

// "id<TAB>class" lines; returns a vector indexed by entity id (-1 if absent).
absl::StatusOr<std::vector<int>> LoadLabels(const std::string& path,
                                            int num_entities);
absl::Status SaveLabels(std::span<const int> labels, const std::string& path);

// Deterministic in (graph, eval_fraction, seed). |eval| =
// round(eval_fraction * |E|); fails if either side would be empty.
absl::StatusOr<GraphSplit> SplitRelations(const TextAttributedGraph& graph,
                                          double eval_fraction, uint64_t seed);

struct SynthParams {
  int num_entities = 2000;
  int num_communities = 50;
  double p_in = 0.45;
  double p_out = 0.0005;
  int vocab_size = 500;
  int max_len = kDefaultMaxLen;
  // Real tokens per entity are drawn uniformly from [min_tokens, max_tokens].
  int min_tokens = 6;
  int max_tokens = 10;
  // Probability that a token is drawn from the entity's community topic
  // rather than from the background distribution.
  double topic_weight = 0.7;
  uint64_t seed = 0;
};

struct SyntheticGraph {
  TextAttributedGraph graph;
  std::vector<int> community;  // entity id -> planted community
};

// Planted-partition graph whose token distributions are conditioned on the
// community, so that text attributes are predictive of relations.
absl::StatusOr<SyntheticGraph> SynthGraph(const SynthParams& params);

}  // namespace dprel

#endif  // DPREL_GRAPH_STORE_H_
