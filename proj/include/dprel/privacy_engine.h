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

#ifndef DPREL_PRIVACY_ENGINE_H_
#define DPREL_PRIVACY_ENGINE_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "dprel/encoder.h"
#include "dprel/rng.h"

namespace dprel {

// Gradient of one trainable group. Dense when `row_ids` is empty; otherwise
// row-sparse, with `values.row(i)` holding row `row_ids[i]` and ids strictly
// increasing.
struct GradBlock {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<Eigen::Index> row_ids;
  RowMatrix values;

  bool sparse() const { return !row_ids.empty() || values.rows() != rows; }
};

// Gradient over all trainable groups, in EncoderParams::TrainableShapes()
// order.
struct FlatGrad {
  std::vector<GradBlock> blocks;

  static FlatGrad Zeros(std::span<const GroupShape> shapes);

  // Sequential sum of squares in group order, row-major within each group.
  // Zero entries do not affect the result, so a sparse block and its dense
  // expansion have identical norms.
  double SquaredNorm() const;
  double Norm() const;
  bool AllFinite() const;
  void Scale(double factor);
  FlatGrad Dense() const;
  // Flattened dense coordinates, group by group.
  std::vector<double> ToVector() const;
};

// Counts scalars held live by a computation, tracking the peak.
class MemoryMeter {
 public:
  void Acquire(int64_t scalars);
  void Release(int64_t scalars);
  int64_t live() const { return live_; }
  int64_t peak() const { return peak_; }

 private:
  int64_t live_ = 0;
  int64_t peak_ = 0;
};

// Stacked product route: per dense factor one G^T H product, bias as the
// column sum of G, embedding rows accumulated sparsely by token id.
FlatGrad TupleGradOuter(const LowRankGradCache& cache,
                        MemoryMeter* meter = nullptr);

// Reference route: materializes every per-token gradient g_t h_t^T, keeps all
// of them, then sums. Quadratic memory; used as an oracle.
FlatGrad TupleGradNaive(const LowRankGradCache& cache,
                        MemoryMeter* meter = nullptr);

enum class NormPath { kAuto, kMaterialize, kGram };

// Gram route is chosen per layer when p * d exceeds this many scalars.
inline constexpr int64_t kDefaultGramThreshold = int64_t{1} << 22;

struct NormOptions {
  NormPath path = NormPath::kAuto;
  int64_t gram_threshold = kDefaultGramThreshold;
};

// Joint Euclidean norm over every trainable group. The Gram route evaluates
// ||G^T H||_F^2 = <G G^T, H H^T> without forming G^T H.
double TupleGradNorm(const LowRankGradCache& cache,
                     const NormOptions& options = {});

// g / max(1, ||g|| / C). The returned gradient satisfies Norm() <= C as
// computed by FlatGrad::Norm. An infinite C disables clipping.
FlatGrad Clip(const FlatGrad& g, double clip_norm);

// Sum of clipped gradients. With a finite bound the sum is accumulated
// exactly in 128-bit fixed point (each coordinate truncated toward zero on a
// grid of bound * 2^-100), so the result is independent of summation order
// and removing one addend changes the sum by exactly that addend's truncation.
// With an infinite bound (clipping disabled) it falls back to plain double
// accumulation in call order.
class ClippedGradSum {
 public:
  ClippedGradSum(std::span<const GroupShape> shapes, double bound);

  // Fails on non-finite entries or entries larger than the bound.
  absl::Status Add(const FlatGrad& g);
  int64_t count() const { return count_; }
  FlatGrad Total() const;
  // this - other, exact in fixed-point mode. Shapes and bounds must match.
  FlatGrad Difference(const ClippedGradSum& other) const;

 private:
  std::vector<GroupShape> shapes_;
  double bound_;
  bool exact_;
  int shift_ = 0;
  double scale_ = 0.0;  // 2^shift_ when representable
  int64_t count_ = 0;
  std::vector<std::vector<__int128>> fixed_;
  std::vector<std::vector<double>> floating_;
};

// Adds i.i.d. N(0, stddev^2) to every coordinate (densifying the gradient).
void AddGaussianNoise(FlatGrad& g, double stddev, Rng& rng);

enum class NoisePlacement {
  kOnce,      // (1/b) [sum_i Clip(g_i) + N(0, sigma^2 C^2 I)]
  kPerTuple,  // (1/b) sum_i [Clip(g_i) + N(0, sigma^2 C^2 I)]
};

// Clips every tuple gradient, sums exactly, adds Gaussian noise of standard
// deviation sigma * C per coordinate and divides by the expected batch size b.
// Noise is drawn even when `tuple_grads` is empty.
absl::StatusOr<FlatGrad> PrivatizeBatch(
    std::span<const FlatGrad> tuple_grads, std::span<const GroupShape> shapes,
    double clip_norm, double sigma, int expected_batch, Rng& rng,
    NoisePlacement placement = NoisePlacement::kOnce);

using ParamViews = std::vector<Eigen::Map<RowMatrix>>;

// theta <- theta - lr * g
void DpSgdStep(ParamViews params, const FlatGrad& grad, double lr);
void DpSgdStep(EncoderParams& params, const FlatGrad& grad, double lr);

struct AdamState {
  int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<RowMatrix> m;
  std::vector<RowMatrix> v;

  static AdamState Zeros(std::span<const GroupShape> shapes);
};

// m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  t <- t+1
// theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
void DpAdamStep(AdamState& state, ParamViews params, const FlatGrad& grad,
                double lr);
void DpAdamStep(AdamState& state, EncoderParams& params, const FlatGrad& grad,
                double lr);

enum class ScheduleKind { kConstant, kLinear, kCosine };

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::kConstant;
  double base = 1e-3;
  int64_t total_steps = 1;
  int64_t warmup_steps = 0;

  // Learning rate of step t in [1, total_steps]: linear warmup over the first
  // warmup_steps, then constant / linear-to-zero / half-cosine decay.
  double At(int64_t step) const;
};

struct LayerDims {
  int64_t p = 0;  // output width
  int64_t d = 0;  // input width
};

struct MemoryCost {
  int64_t naive_scalars = 0;
  int64_t lowrank_scalars = 0;
};

// Scalar counts of per-tuple gradient computation summed over layers, for K
// entities of M tokens. Full mode: naive K M p d versus K M (p + d) + p d.
// Adapter mode (rank r): naive K M (p + d) r versus
// K M (p + d + 2r) + (p + d) r.
absl::StatusOr<MemoryCost> MemoryEstimate(int64_t entities, int64_t tokens,
                                          std::span<const LayerDims> layers,
                                          TrainMode mode, int64_t rank = 0);

}  // namespace dprel

#endif  // DPREL_PRIVACY_ENGINE_H_
