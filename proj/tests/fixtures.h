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

#ifndef DPREL_TESTS_FIXTURES_H_
#define DPREL_TESTS_FIXTURES_H_

// Helpers without a gtest dependency, shared with the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

#include "dprel/encoder.h"
#include "dprel/graph_store.h"

namespace dprel::testing {

inline double RelErr(double got, double want, double floor = 1e-300) {
  return std::fabs(got - want) / std::max(std::fabs(want), floor);
}

// max |a - b| / max(max |b|, floor) over matching shapes.
inline double MaxRelErr(const RowMatrix& got, const RowMatrix& want,
                        double floor = 1e-12) {
  if (got.rows() != want.rows() || got.cols() != want.cols()) return INFINITY;
  const double scale = std::max(want.cwiseAbs().maxCoeff(), floor);
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

inline RowMatrix RandomMatrix(Eigen::Index rows, Eigen::Index cols,
                              std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Small graph with every entity holding `tokens` random real tokens.
inline TextAttributedGraph MakeGraph(int n, int vocab,
                                     const std::vector<Relation>& relations,
                                     std::mt19937_64& rng, int min_tokens = 1,
                                     int max_tokens = 4, int max_len = 8) {
  std::uniform_int_distribution<int> len(min_tokens, max_tokens);
  std::uniform_int_distribution<TokenId> tok(1, vocab - 1);
  std::vector<TokenSeq> attrs;
  for (int e = 0; e < n; ++e) {
    std::vector<TokenId> t(len(rng));
    for (auto& x : t) x = tok(rng);
    attrs.push_back(TokenSeq::FromTokens(t, max_len));
  }
  auto g = TextAttributedGraph::Create(std::move(attrs), relations, vocab);
  if (!g.ok()) std::abort();
  return *std::move(g);
}

}  // namespace dprel::testing

#endif  // DPREL_TESTS_FIXTURES_H_
