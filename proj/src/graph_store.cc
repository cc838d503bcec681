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

#include "dprel/graph_store.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include "absl/strings/string_view.h"
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "dprel/rng.h"

namespace dprel {
namespace {

template <typename T>
bool ParseInt(absl::string_view text, T& out) {
  text = absl::StripAsciiWhitespace(text);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

absl::Status LineError(const std::string& path, int line_no,
                       absl::string_view what) {
  return absl::InvalidArgumentError(
      absl::StrCat(path, ":", line_no, ": ", what));
}

// Strips comments and whitespace; returns false for lines to skip.
bool ContentLine(std::string& line) {
  if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return !absl::StripAsciiWhitespace(line).empty();
}

absl::StatusOr<std::pair<EntityId, std::string>> SplitIdField(
    const std::string& line, const std::string& path, int line_no) {
  auto tab = line.find('\t');
  if (tab == std::string::npos) {
    return LineError(path, line_no, "expected 'id<TAB>attributes'");
  }
  EntityId id;
  if (!ParseInt(absl::string_view(line).substr(0, tab), id) || id < 0) {
    return LineError(path, line_no, "invalid entity id");
  }
  return std::make_pair(id, line.substr(tab + 1));
}

}  // namespace

TokenSeq TokenSeq::FromTokens(std::span<const TokenId> tokens, int max_len) {
  TokenSeq seq;
  seq.length = std::min<int>(static_cast<int>(tokens.size()), max_len);
  seq.ids.assign(max_len, kPadId);
  std::copy_n(tokens.begin(), seq.length, seq.ids.begin());
  return seq;
}

std::optional<Relation> Relation::Make(EntityId a, EntityId b) {
  if (a == b) return std::nullopt;
  return Relation{std::min(a, b), std::max(a, b)};
}

absl::StatusOr<TextAttributedGraph> TextAttributedGraph::Create(
    std::vector<TokenSeq> attributes, std::vector<Relation> relations,
    int vocab_size) {
  if (attributes.empty()) {
    return absl::InvalidArgumentError("graph has no entities");
  }
  if (vocab_size < 2) {
    return absl::InvalidArgumentError("vocabulary must hold pad + 1 token");
  }
  const int max_len = static_cast<int>(attributes.front().ids.size());
  const int n = static_cast<int>(attributes.size());
  for (int i = 0; i < n; ++i) {
    const TokenSeq& seq = attributes[i];
    if (static_cast<int>(seq.ids.size()) != max_len || seq.length < 1 ||
        seq.length > max_len) {
      return absl::InvalidArgumentError(
          absl::StrCat("entity ", i, ": token sequence must have 1..", max_len,
                       " real tokens"));
    }
    for (int t = 0; t < max_len; ++t) {
      const TokenId id = seq.ids[t];
      if (t < seq.length && (id <= kPadId || id >= vocab_size)) {
        return absl::InvalidArgumentError(absl::StrCat(
            "entity ", i, ": token id ", id, " outside [1, ", vocab_size, ")"));
      }
      if (t >= seq.length && id != kPadId) {
        return absl::InvalidArgumentError(
            absl::StrCat("entity ", i, ": non-pad id after sequence end"));
      }
    }
  }
  for (Relation& r : relations) {
    auto canonical = Relation::Make(r.u, r.v);
    if (!canonical) {
      return absl::InvalidArgumentError(
          absl::StrCat("self-loop on entity ", r.u));
    }
    if (canonical->u < 0 || canonical->v >= n) {
      return absl::InvalidArgumentError(absl::StrCat(
          "dangling relation endpoint in (", r.u, ", ", r.v, ")"));
    }
    r = *canonical;
  }
  std::sort(relations.begin(), relations.end());
  relations.erase(std::unique(relations.begin(), relations.end()),
                  relations.end());
  if (relations.empty()) {
    return absl::InvalidArgumentError("empty relation set");
  }
  TextAttributedGraph g;
  g.attributes_ = std::move(attributes);
  g.relations_ = std::move(relations);
  g.vocab_size_ = vocab_size;
  g.max_len_ = max_len;
  return g;
}

bool TextAttributedGraph::HasRelation(EntityId a, EntityId b) const {
  auto r = Relation::Make(a, b);
  return r && std::binary_search(relations_.begin(), relations_.end(), *r);
}

absl::StatusOr<Vocabulary> LoadVocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  Vocabulary vocab;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = absl::StrSplit(line, '\t');
    TokenId id;
    if (fields.size() != 2 || fields[0].empty() || !ParseInt(fields[1], id)) {
      return LineError(path, line_no, "expected 'token<TAB>id'");
    }
    if (id <= kPadId) {
      return LineError(path, line_no, "token id 0 is reserved for padding");
    }
    if (!vocab.emplace(fields[0], id).second) {
      return LineError(path, line_no, "duplicate token");
    }
  }
  return vocab;
}

absl::StatusOr<std::vector<Relation>> LoadRelations(const std::string& path,
                                                    int num_entities) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::vector<Relation> relations;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!ContentLine(line)) continue;
    std::vector<absl::string_view> fields =
        absl::StrSplit(line, absl::ByAnyChar("\t"), absl::SkipEmpty());
    EntityId a, b;
    if (fields.size() != 2 || !ParseInt(fields[0], a) ||
        !ParseInt(fields[1], b)) {
      return LineError(path, line_no, "expected 'u<TAB>v'");
    }
    if (a < 0 || b < 0 || a >= num_entities || b >= num_entities) {
      return LineError(path, line_no,
                       absl::StrCat("dangling endpoint (", a, ", ", b,
                                    ") with ", num_entities, " entities"));
    }
    auto r = Relation::Make(a, b);
    if (!r) return LineError(path, line_no, "self-loop");
    relations.push_back(*r);
  }
  return relations;
}

absl::StatusOr<TextAttributedGraph> LoadGraph(const std::string& entities_path,
                                              const std::string& relations_path,
                                              const LoadOptions& options) {
  if (options.max_len < 1) {
    return absl::InvalidArgumentError("max_len must be positive");
  }
  std::optional<Vocabulary> vocab;
  if (options.format == EntityFormat::kRawText) {
    if (options.vocab_path.empty()) {
      return absl::InvalidArgumentError("raw-text entities need a vocab file");
    }
    auto loaded = LoadVocabulary(options.vocab_path);
    if (!loaded.ok()) return loaded.status();
    vocab = std::move(*loaded);
  }

  std::ifstream in(entities_path);
  if (!in) {
    return absl::NotFoundError(absl::StrCat("cannot open ", entities_path));
  }
  std::vector<std::pair<EntityId, std::vector<TokenId>>> records;
  TokenId max_token = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (absl::StripAsciiWhitespace(line).empty()) continue;
    auto fields = SplitIdField(line, entities_path, line_no);
    if (!fields.ok()) return fields.status();
    std::vector<TokenId> tokens;
    if (vocab) {
      const auto unk = vocab->find("<unk>");
      for (absl::string_view word :
           absl::StrSplit(fields->second, absl::ByAnyChar(" \t"),
                          absl::SkipEmpty())) {
        auto it = vocab->find(std::string(word));
        if (it == vocab->end()) it = unk;
        if (it == vocab->end()) {
          return LineError(entities_path, line_no,
                           absl::StrCat("token '", word, "' not in vocab"));
        }
        tokens.push_back(it->second);
      }
    } else {
      for (absl::string_view field :
           absl::StrSplit(fields->second, ',', absl::SkipEmpty())) {
        TokenId id;
        if (!ParseInt(field, id) || id <= kPadId) {
          return LineError(entities_path, line_no,
                           "token ids must be integers >= 1");
        }
        tokens.push_back(id);
      }
    }
    if (tokens.empty()) {
      return LineError(entities_path, line_no, "entity has no tokens");
    }
    for (TokenId t : tokens) max_token = std::max(max_token, t);
    records.emplace_back(fields->first, std::move(tokens));
  }

  const int n = static_cast<int>(records.size());
  std::vector<TokenSeq> attributes(n);
  std::vector<bool> seen(n, false);
  for (auto& [id, tokens] : records) {
    if (id >= n || seen[id]) {
      return absl::InvalidArgumentError(absl::StrCat(
          entities_path, ": entity ids must be exactly 0..", n - 1,
          " (bad or repeated id ", id, ")"));
    }
    seen[id] = true;
    attributes[id] = TokenSeq::FromTokens(tokens, options.max_len);
  }

  int vocab_size = options.vocab_size;
  if (vocab_size == 0) {
    vocab_size = max_token + 1;
    if (vocab) {
      for (const auto& [word, id] : *vocab) vocab_size = std::max(vocab_size, id + 1);
    }
  }

  auto relations = LoadRelations(relations_path, n);
  if (!relations.ok()) return relations.status();
  return TextAttributedGraph::Create(std::move(attributes),
                                     std::move(*relations), vocab_size);
}

absl::Status SaveRelations(std::span<const Relation> relations,
                           const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot write ", path));
  for (const Relation& r : relations) out << r.u << '\t' << r.v << '\n';
  return out ? absl::OkStatus()
             : absl::DataLossError(absl::StrCat("write failed: ", path));
}

absl::Status SaveGraph(const TextAttributedGraph& graph,
                       const std::string& entities_path,
                       const std::string& relations_path) {
  std::ofstream out(entities_path, std::ios::binary);
  if (!out) {
    return absl::UnavailableError(absl::StrCat("cannot write ", entities_path));
  }
  for (EntityId i = 0; i < graph.num_entities(); ++i) {
    out << i << '\t' << absl::StrJoin(graph.attributes(i).real(), ",") << '\n';
  }
  if (!out) return absl::DataLossError("entity write failed");
  return SaveRelations(graph.relations(), relations_path);
}

absl::StatusOr<std::vector<int>> LoadLabels(const std::string& path,
                                            int num_entities) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::vector<int> labels(num_entities, -1);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!ContentLine(line)) continue;
    auto fields = SplitIdField(line, path, line_no);
    if (!fields.ok()) return fields.status();
    int label;
    if (fields->first >= num_entities || !ParseInt(fields->second, label) ||
        label < 0) {
      return LineError(path, line_no, "expected 'id<TAB>class' in range");
    }
    labels[fields->first] = label;
  }
  return labels;
}

absl::Status SaveLabels(std::span<const int> labels, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot write ", path));
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) out << i << '\t' << labels[i] << '\n';
  }
  return absl::OkStatus();
}

absl::StatusOr<GraphSplit> SplitRelations(const TextAttributedGraph& graph,
                                          double eval_fraction, uint64_t seed) {
  const auto& all = graph.relations();
  if (all.size() < 2) {
    return absl::InvalidArgumentError("need at least 2 relations to split");
  }
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    return absl::InvalidArgumentError("eval_fraction must lie in (0, 1)");
  }
  const auto n_eval = static_cast<size_t>(
      std::llround(eval_fraction * static_cast<double>(all.size())));
  if (n_eval == 0 || n_eval >= all.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "eval_fraction ", eval_fraction, " leaves an empty ",
        n_eval == 0 ? "eval" : "train", " set for ", all.size(), " relations"));
  }
  std::vector<size_t> order(all.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = MakeRng(seed, "split");
  // Explicit Fisher-Yates: std::shuffle's output is implementation-defined.
  for (size_t i = order.size() - 1; i > 0; --i) {
    const size_t j = rng() % (i + 1);
    std::swap(order[i], order[j]);
  }
  GraphSplit split;
  split.num_entities = graph.num_entities();
  for (size_t i = 0; i < order.size(); ++i) {
    (i < n_eval ? split.eval : split.train).push_back(all[order[i]]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.eval.begin(), split.eval.end());
  return split;
}

absl::StatusOr<SyntheticGraph> SynthGraph(const SynthParams& p) {
  if (p.num_communities < 1 || p.num_entities < p.num_communities) {
    return absl::InvalidArgumentError(
        "need num_entities >= num_communities >= 1");
  }
  if (!(p.p_in > p.p_out) || p.p_out < 0.0 || p.p_in > 1.0) {
    return absl::InvalidArgumentError("need 1 >= p_in > p_out >= 0");
  }
  if (p.vocab_size < 2 || p.min_tokens < 1 || p.max_tokens < p.min_tokens ||
      p.max_len < 1) {
    return absl::InvalidArgumentError("invalid token parameters");
  }
  if (p.topic_weight < 0.0 || p.topic_weight > 1.0) {
    return absl::InvalidArgumentError("topic_weight must lie in [0, 1]");
  }
  const int n = p.num_entities;
  const int n_real_tokens = p.vocab_size - 1;
  // Communities get contiguous (wrapping) blocks of topic tokens.
  const int topic_size = std::max(1, n_real_tokens / p.num_communities);

  Rng rng = MakeRng(p.seed, "synth");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> community(n);
  // Round-robin assignment keeps community sizes within one of each other.
  for (int i = 0; i < n; ++i) community[i] = i % p.num_communities;

  std::vector<TokenSeq> attributes(n);
  std::uniform_int_distribution<int> length_dist(p.min_tokens, p.max_tokens);
  std::uniform_int_distribution<int> background(1, n_real_tokens);
  std::uniform_int_distribution<int> topic_pick(0, topic_size - 1);
  for (int i = 0; i < n; ++i) {
    const int c = community[i];
    std::vector<TokenId> tokens(length_dist(rng));
    for (TokenId& t : tokens) {
      if (unit(rng) < p.topic_weight) {
        t = 1 + (c * topic_size + topic_pick(rng)) % n_real_tokens;
      } else {
        t = background(rng);
      }
    }
    attributes[i] = TokenSeq::FromTokens(tokens, p.max_len);
  }

  std::vector<Relation> relations;
  for (EntityId a = 0; a < n; ++a) {
    for (EntityId b = a + 1; b < n; ++b) {
      const double prob =
          community[a] == community[b] ? p.p_in : p.p_out;
      if (prob > 0.0 && unit(rng) < prob) relations.push_back({a, b});
    }
  }
  auto graph = TextAttributedGraph::Create(std::move(attributes),
                                           std::move(relations), p.vocab_size);
  if (!graph.ok()) return graph.status();
  return SyntheticGraph{std::move(*graph), std::move(community)};
}

}  // namespace dprel
