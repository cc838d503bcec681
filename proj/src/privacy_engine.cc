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

#include "dprel/privacy_engine.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>

#include "absl/strings/str_cat.h"

namespace dprel {
namespace {

// Rows of `grads` summed per token id; ids ascending.
struct AggregatedRows {
  std::vector<Eigen::Index> ids;
  RowMatrix values;
};

AggregatedRows AggregateByToken(const EmbeddingFactor& f) {
  const auto n = static_cast<Eigen::Index>(f.token_ids.size());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&f](Eigen::Index a, Eigen::Index b) {
    return f.token_ids[a] < f.token_ids[b];
  });
  AggregatedRows out;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == 0 || f.token_ids[order[i]] != f.token_ids[order[i - 1]]) {
      out.ids.push_back(f.token_ids[order[i]]);
    }
  }
  out.values = RowMatrix::Zero(static_cast<Eigen::Index>(out.ids.size()),
                               f.row_grads.cols());
  Eigen::Index slot = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == 0 || f.token_ids[order[i]] != f.token_ids[order[i - 1]]) ++slot;
    out.values.row(slot) += f.row_grads.row(order[i]);
  }
  return out;
}

GradBlock DenseBlockOf(const GroupShape& shape) {
  return GradBlock{shape.rows, shape.cols, {},
                   RowMatrix::Zero(shape.rows, shape.cols)};
}

int64_t CacheScalars(const LowRankGradCache& cache) {
  int64_t total = 0;
  if (cache.embedding) {
    total += cache.embedding->row_grads.size() +
             static_cast<int64_t>(cache.embedding->token_ids.size());
  }
  for (const DenseFactor& f : cache.dense) {
    total += f.inputs.size() + f.output_grads.size();
  }
  return total;
}

double SequentialSquares(const double* data, Eigen::Index n, double acc) {
  for (Eigen::Index i = 0; i < n; ++i) acc += data[i] * data[i];
  return acc;
}

void Acquire(MemoryMeter* meter, int64_t n) {
  if (meter != nullptr) meter->Acquire(n);
}

}  // namespace

FlatGrad FlatGrad::Zeros(std::span<const GroupShape> shapes) {
  FlatGrad g;
  for (const GroupShape& s : shapes) g.blocks.push_back(DenseBlockOf(s));
  return g;
}

double FlatGrad::SquaredNorm() const {
  double acc = 0.0;
  for (const GradBlock& b : blocks) {
    acc = SequentialSquares(b.values.data(), b.values.size(), acc);
  }
  return acc;
}

double FlatGrad::Norm() const { return std::sqrt(SquaredNorm()); }

bool FlatGrad::AllFinite() const {
  for (const GradBlock& b : blocks) {
    if (!b.values.allFinite()) return false;
  }
  return true;
}

void FlatGrad::Scale(double factor) {
  for (GradBlock& b : blocks) b.values *= factor;
}

FlatGrad FlatGrad::Dense() const {
  FlatGrad out;
  for (const GradBlock& b : blocks) {
    if (!b.sparse()) {
      out.blocks.push_back(b);
      continue;
    }
    GradBlock d{b.rows, b.cols, {}, RowMatrix::Zero(b.rows, b.cols)};
    for (size_t i = 0; i < b.row_ids.size(); ++i) {
      d.values.row(b.row_ids[i]) = b.values.row(static_cast<Eigen::Index>(i));
    }
    out.blocks.push_back(std::move(d));
  }
  return out;
}

std::vector<double> FlatGrad::ToVector() const {
  std::vector<double> out;
  for (const GradBlock& b : Dense().blocks) {
    out.insert(out.end(), b.values.data(), b.values.data() + b.values.size());
  }
  return out;
}

void MemoryMeter::Acquire(int64_t scalars) {
  live_ += scalars;
  peak_ = std::max(peak_, live_);
}

void MemoryMeter::Release(int64_t scalars) { live_ -= scalars; }

FlatGrad TupleGradOuter(const LowRankGradCache& cache, MemoryMeter* meter) {
  Acquire(meter, CacheScalars(cache));
  FlatGrad out;
  out.blocks.resize(cache.shapes.size());
  std::vector<bool> filled(cache.shapes.size(), false);
  if (cache.embedding) {
    const GroupShape& shape = cache.shapes[cache.embedding->group];
    AggregatedRows rows = AggregateByToken(*cache.embedding);
    Acquire(meter, rows.values.size());
    out.blocks[cache.embedding->group] =
        GradBlock{shape.rows, shape.cols, std::move(rows.ids),
                  std::move(rows.values)};
    filled[cache.embedding->group] = true;
  }
  for (const DenseFactor& f : cache.dense) {
    const GroupShape& shape = cache.shapes[f.group];
    GradBlock block{shape.rows, shape.cols, {}, RowMatrix(shape.rows, shape.cols)};
    Acquire(meter, block.values.size());
    block.values.noalias() = f.output_grads.transpose() * f.inputs;
    out.blocks[f.group] = std::move(block);
    filled[f.group] = true;
    if (f.bias_group >= 0) {
      const GroupShape& bias_shape = cache.shapes[f.bias_group];
      Acquire(meter, bias_shape.size());
      out.blocks[f.bias_group] =
          GradBlock{bias_shape.rows, bias_shape.cols, {},
                    f.output_grads.colwise().sum()};
      filled[f.bias_group] = true;
    }
  }
  for (size_t g = 0; g < cache.shapes.size(); ++g) {
    if (!filled[g]) out.blocks[g] = DenseBlockOf(cache.shapes[g]);
  }
  return out;
}

FlatGrad TupleGradNaive(const LowRankGradCache& cache, MemoryMeter* meter) {
  Acquire(meter, CacheScalars(cache));
  FlatGrad out = FlatGrad::Zeros(cache.shapes);
  for (const GroupShape& s : cache.shapes) Acquire(meter, s.size());
  if (cache.embedding) {
    const EmbeddingFactor& f = *cache.embedding;
    // One gradient row per token occurrence, kept until the final sum.
    std::vector<RowVector> per_token;
    per_token.reserve(f.token_ids.size());
    for (Eigen::Index t = 0; t < f.row_grads.rows(); ++t) {
      per_token.emplace_back(f.row_grads.row(t));
      Acquire(meter, f.row_grads.cols());
    }
    RowMatrix& dst = out.blocks[f.group].values;
    for (size_t t = 0; t < per_token.size(); ++t) {
      dst.row(f.token_ids[t]) += per_token[t];
    }
  }
  for (const DenseFactor& f : cache.dense) {
    const Eigen::Index tokens = f.inputs.rows();
    std::vector<RowMatrix> per_token;
    per_token.reserve(tokens);
    for (Eigen::Index t = 0; t < tokens; ++t) {
      per_token.push_back(f.output_grads.row(t).transpose() * f.inputs.row(t));
      Acquire(meter, per_token.back().size());
    }
    RowMatrix& dst = out.blocks[f.group].values;
    for (const RowMatrix& outer : per_token) dst += outer;
    if (f.bias_group >= 0) {
      RowMatrix& bias = out.blocks[f.bias_group].values;
      for (Eigen::Index t = 0; t < tokens; ++t) bias += f.output_grads.row(t);
    }
  }
  return out;
}

double TupleGradNorm(const LowRankGradCache& cache, const NormOptions& options) {
  double total = 0.0;
  if (cache.embedding) {
    total += AggregateByToken(*cache.embedding).values.squaredNorm();
  }
  for (const DenseFactor& f : cache.dense) {
    const int64_t pd = f.inputs.cols() * f.output_grads.cols();
    const bool gram = options.path == NormPath::kGram ||
                      (options.path == NormPath::kAuto &&
                       pd > options.gram_threshold);
    if (gram) {
      const RowMatrix gg = f.output_grads * f.output_grads.transpose();
      const RowMatrix hh = f.inputs * f.inputs.transpose();
      total += gg.cwiseProduct(hh).sum();
    } else {
      total += (f.output_grads.transpose() * f.inputs).squaredNorm();
    }
    if (f.bias_group >= 0) {
      total += f.output_grads.colwise().sum().squaredNorm();
    }
  }
  return std::sqrt(std::max(total, 0.0));
}

namespace {

// Truncates toward zero, like static_cast<__int128>, for |y| < 2^126
// without going through the soft-float library routine.
__int128 TruncToInt128(double y) {
  if (std::fabs(y) < 0x1p63) return static_cast<int64_t>(y);
  // |y| >= 2^63 is already an integer: mantissa << exponent.
  const uint64_t bits = std::bit_cast<uint64_t>(y);
  const int exp = static_cast<int>((bits >> 52) & 0x7ff) - 1075;
  const uint64_t mant = (bits & ((uint64_t{1} << 52) - 1)) | (uint64_t{1} << 52);
  const __int128 mag = static_cast<__int128>(mant) << exp;
  return (bits >> 63) ? -mag : mag;
}

}  // namespace

FlatGrad Clip(const FlatGrad& g, double clip_norm) {
  const double norm = g.Norm();
  if (!(norm > clip_norm)) return g;
  double scale = clip_norm / norm;
  FlatGrad out = g;
  out.Scale(scale);
  // Rounding can leave the computed norm a few ulps above C.
  while (out.Norm() > clip_norm) {
    scale = std::nextafter(scale, 0.0);
    out = g;
    out.Scale(scale);
  }
  return out;
}

ClippedGradSum::ClippedGradSum(std::span<const GroupShape> shapes, double bound)
    : shapes_(shapes.begin(), shapes.end()),
      bound_(bound),
      exact_(std::isfinite(bound)) {
  if (exact_) {
    // |x| <= bound < 2^(ilogb(bound) + 1); keep 100 bits of headroom below.
    shift_ = 100 - (std::ilogb(bound) + 1);
    if (std::abs(shift_) <= 1000) scale_ = std::ldexp(1.0, shift_);
    for (const GroupShape& s : shapes_) fixed_.emplace_back(s.size(), 0);
  } else {
    for (const GroupShape& s : shapes_) floating_.emplace_back(s.size(), 0.0);
  }
}

absl::Status ClippedGradSum::Add(const FlatGrad& g) {
  if (g.blocks.size() != shapes_.size()) {
    return absl::InvalidArgumentError("gradient group count mismatch");
  }
  for (size_t k = 0; k < shapes_.size(); ++k) {
    const GradBlock& b = g.blocks[k];
    const Eigen::Index cols = shapes_[k].cols;
    if (b.cols != cols || b.rows != shapes_[k].rows) {
      return absl::InvalidArgumentError(
          absl::StrCat("gradient shape mismatch in group ", shapes_[k].name));
    }
    for (Eigen::Index r = 0; r < b.values.rows(); ++r) {
      const Eigen::Index row = b.sparse() ? b.row_ids[r] : r;
      for (Eigen::Index c = 0; c < cols; ++c) {
        const double x = b.values(r, c);
        if (!std::isfinite(x)) {
          return absl::InvalidArgumentError(absl::StrCat(
              "non-finite gradient entry in group ", shapes_[k].name));
        }
        const size_t idx = static_cast<size_t>(row * cols + c);
        if (exact_) {
          if (std::abs(x) > bound_) {
            return absl::InvalidArgumentError(
                "gradient entry exceeds the clipping bound");
          }
          // Multiplying by a power of two rounds exactly like ldexp.
          fixed_[k][idx] += TruncToInt128(
              scale_ != 0.0 ? x * scale_ : std::ldexp(x, shift_));
        } else {
          floating_[k][idx] += x;
        }
      }
    }
  }
  ++count_;
  return absl::OkStatus();
}

FlatGrad ClippedGradSum::Total() const {
  FlatGrad out = FlatGrad::Zeros(shapes_);
  for (size_t k = 0; k < shapes_.size(); ++k) {
    double* dst = out.blocks[k].values.data();
    for (int64_t i = 0; i < shapes_[k].size(); ++i) {
      dst[i] = exact_ ? std::ldexp(static_cast<double>(fixed_[k][i]), -shift_)
                      : floating_[k][i];
    }
  }
  return out;
}

FlatGrad ClippedGradSum::Difference(const ClippedGradSum& other) const {
  FlatGrad out = FlatGrad::Zeros(shapes_);
  for (size_t k = 0; k < shapes_.size(); ++k) {
    double* dst = out.blocks[k].values.data();
    for (int64_t i = 0; i < shapes_[k].size(); ++i) {
      dst[i] = exact_ ? std::ldexp(static_cast<double>(fixed_[k][i] -
                                                       other.fixed_[k][i]),
                                   -shift_)
                      : floating_[k][i] - other.floating_[k][i];
    }
  }
  return out;
}

void AddGaussianNoise(FlatGrad& g, double stddev, Rng& rng) {
  g = g.Dense();
  std::normal_distribution<double> normal(0.0, 1.0);
  for (GradBlock& b : g.blocks) {
    double* data = b.values.data();
    for (Eigen::Index i = 0; i < b.values.size(); ++i) {
      data[i] += stddev * normal(rng);
    }
  }
}

absl::StatusOr<FlatGrad> PrivatizeBatch(std::span<const FlatGrad> tuple_grads,
                                        std::span<const GroupShape> shapes,
                                        double clip_norm, double sigma,
                                        int expected_batch, Rng& rng,
                                        NoisePlacement placement) {
  if (!(clip_norm > 0.0)) {
    return absl::InvalidArgumentError("clip norm must be positive");
  }
  if (!(sigma >= 0.0) || (sigma > 0.0 && !std::isfinite(clip_norm))) {
    return absl::InvalidArgumentError(
        "noise needs a finite clip norm and sigma >= 0");
  }
  if (expected_batch < 1) {
    return absl::InvalidArgumentError("expected batch size must be >= 1");
  }
  ClippedGradSum sum(shapes, clip_norm);
  for (const FlatGrad& g : tuple_grads) {
    if (absl::Status s = sum.Add(Clip(g, clip_norm)); !s.ok()) return s;
  }
  FlatGrad out = sum.Total();
  if (sigma > 0.0) {
    const size_t draws =
        placement == NoisePlacement::kOnce ? 1 : tuple_grads.size();
    for (size_t i = 0; i < draws; ++i) AddGaussianNoise(out, sigma * clip_norm, rng);
  }
  out.Scale(1.0 / expected_batch);
  return out;
}

void DpSgdStep(ParamViews params, const FlatGrad& grad, double lr) {
  for (size_t k = 0; k < params.size(); ++k) {
    const GradBlock& b = grad.blocks[k];
    if (b.sparse()) {
      for (size_t i = 0; i < b.row_ids.size(); ++i) {
        params[k].row(b.row_ids[i]) -=
            lr * b.values.row(static_cast<Eigen::Index>(i));
      }
    } else {
      params[k] -= lr * b.values;
    }
  }
}

void DpSgdStep(EncoderParams& params, const FlatGrad& grad, double lr) {
  DpSgdStep(params.TrainableViews(), grad, lr);
}

AdamState AdamState::Zeros(std::span<const GroupShape> shapes) {
  AdamState state;
  for (const GroupShape& s : shapes) {
    state.m.push_back(RowMatrix::Zero(s.rows, s.cols));
    state.v.push_back(RowMatrix::Zero(s.rows, s.cols));
  }
  return state;
}

void DpAdamStep(AdamState& state, ParamViews params, const FlatGrad& grad,
                double lr) {
  const FlatGrad dense = grad.Dense();
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (size_t k = 0; k < params.size(); ++k) {
    const RowMatrix& g = dense.blocks[k].values;
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
    state.v[k] =
        state.beta2 * state.v[k] + (1.0 - state.beta2) * g.cwiseProduct(g);
    params[k].array() -=
        lr * (state.m[k].array() / correction1) /
        ((state.v[k].array() / correction2).sqrt() + state.eps);
  }
}

void DpAdamStep(AdamState& state, EncoderParams& params, const FlatGrad& grad,
                double lr) {
  DpAdamStep(state, params.TrainableViews(), grad, lr);
}

double LrSchedule::At(int64_t step) const {
  if (warmup_steps > 0 && step <= warmup_steps) {
    return base * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const double span =
      static_cast<double>(std::max<int64_t>(1, total_steps - warmup_steps));
  const double progress =
      std::clamp(static_cast<double>(step - 1 - warmup_steps) / span, 0.0, 1.0);
  switch (kind) {
    case ScheduleKind::kConstant:
      return base;
    case ScheduleKind::kLinear:
      return base * (1.0 - progress);
    case ScheduleKind::kCosine:
      return base * 0.5 * (1.0 + std::cos(M_PI * progress));
  }
  return base;
}

absl::StatusOr<MemoryCost> MemoryEstimate(int64_t entities, int64_t tokens,
                                          std::span<const LayerDims> layers,
                                          TrainMode mode, int64_t rank) {
  if (entities < 1 || tokens < 1 || layers.empty()) {
    return absl::InvalidArgumentError("need K, M >= 1 and at least one layer");
  }
  if (mode == TrainMode::kAdapter && rank < 1) {
    return absl::InvalidArgumentError("adapter mode needs rank >= 1");
  }
  const int64_t rows = entities * tokens;
  MemoryCost cost;
  for (const LayerDims& l : layers) {
    if (l.p < 1 || l.d < 1) {
      return absl::InvalidArgumentError("layer dimensions must be positive");
    }
    if (mode == TrainMode::kFull) {
      cost.naive_scalars += rows * l.p * l.d;
      cost.lowrank_scalars += rows * (l.p + l.d) + l.p * l.d;
    } else {
      cost.naive_scalars += rows * (l.p + l.d) * rank;
      cost.lowrank_scalars += rows * (l.p + l.d + 2 * rank) + (l.p + l.d) * rank;
    }
  }
  return cost;
}

}  // namespace dprel
