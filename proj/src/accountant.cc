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

#include "dprel/accountant.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "absl/strings/str_cat.h"

namespace dprel {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double LogAddExp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

double RdpSubsampledGaussian(double q, double sigma, int alpha) {
  if (q <= 0.0) return 0.0;
  if (q >= 1.0) return alpha / (2.0 * sigma * sigma);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double log_sum = -kInf;
  for (int j = 0; j <= alpha; ++j) {
    const double log_binom = std::lgamma(alpha + 1.0) - std::lgamma(j + 1.0) -
                             std::lgamma(alpha - j + 1.0);
    const double term = log_binom + (alpha - j) * log_1mq + j * log_q +
                        j * (j - 1.0) / (2.0 * sigma * sigma);
    log_sum = LogAddExp(log_sum, term);
  }
  return std::max(0.0, log_sum / (alpha - 1.0));
}

const std::vector<double>& DefaultRdpOrders() {
  static const std::vector<double>* orders = [] {
    auto* v = new std::vector<double>{1.25, 1.5, 1.75};
    for (int a = 2; a <= 256; ++a) v->push_back(a);
    return v;
  }();
  return *orders;
}

RdpAccountant::RdpAccountant()
    : orders_(DefaultRdpOrders()), rdp_(orders_.size(), 0.0) {}

absl::Status RdpAccountant::Compose(double q, double sigma, int64_t steps) {
  if (!(q >= 0.0 && q <= 1.0)) {
    return absl::InvalidArgumentError("sampling ratio must lie in [0, 1]");
  }
  if (!(sigma > 0.0)) {
    return absl::InvalidArgumentError("noise multiplier must be positive");
  }
  if (steps < 0) return absl::InvalidArgumentError("steps must be >= 0");
  if (steps == 0) return absl::OkStatus();
  if (q != cached_q_ || sigma != cached_sigma_) {
    cached_step_.resize(orders_.size());
    for (size_t i = 0; i < orders_.size(); ++i) {
      cached_step_[i] = RdpSubsampledGaussian(
          q, sigma, static_cast<int>(std::ceil(orders_[i])));
    }
    cached_q_ = q;
    cached_sigma_ = sigma;
  }
  for (size_t i = 0; i < orders_.size(); ++i) {
    rdp_[i] += static_cast<double>(steps) * cached_step_[i];
  }
  history_.push_back({q, sigma, steps});
  return absl::OkStatus();
}

absl::StatusOr<EpsilonResult> RdpAccountant::ToEpsilon(double delta) const {
  if (!(delta > 0.0 && delta < 1.0)) {
    return absl::InvalidArgumentError("delta must lie in (0, 1)");
  }
  if (history_.empty()) return EpsilonResult{0.0, orders_.front()};
  EpsilonResult best{kInf, orders_.front()};
  for (size_t i = 0; i < orders_.size(); ++i) {
    const double a = orders_[i];
    const double eps = rdp_[i] + std::log((a - 1.0) / a) -
                       (std::log(delta) + std::log(a)) / (a - 1.0);
    if (eps < best.epsilon) best = {eps, a};
  }
  best.epsilon = std::max(0.0, best.epsilon);
  return best;
}

absl::StatusOr<double> ComputeEpsilon(double q, double sigma, int64_t steps,
                                      double delta) {
  RdpAccountant accountant;
  if (absl::Status s = accountant.Compose(q, sigma, steps); !s.ok()) return s;
  auto result = accountant.ToEpsilon(delta);
  if (!result.ok()) return result.status();
  return result->epsilon;
}

absl::StatusOr<double> CalibrateSigma(double target_epsilon, double delta,
                                      double q, int64_t steps) {
  if (!(target_epsilon > 0.0)) {
    return absl::InvalidArgumentError("target epsilon must be positive");
  }
  auto eps_at = [&](double sigma) { return ComputeEpsilon(q, sigma, steps, delta); };
  auto hi_eps = eps_at(kMaxSigma);
  if (!hi_eps.ok()) return hi_eps.status();
  if (*hi_eps > target_epsilon) {
    return absl::OutOfRangeError(absl::StrCat(
        "epsilon ", target_epsilon, " unreachable with sigma <= ", kMaxSigma,
        " (q=", q, ", T=", steps, ")"));
  }
  auto lo_eps = eps_at(kMinSigma);
  if (!lo_eps.ok()) return lo_eps.status();
  if (*lo_eps <= target_epsilon) return kMinSigma;
  double lo = kMinSigma;
  double hi = kMaxSigma;
  double achieved = *hi_eps;
  while (hi - lo > 1e-4 && target_epsilon - achieved > 0.01) {
    const double mid = 0.5 * (lo + hi);
    auto eps = eps_at(mid);
    if (!eps.ok()) return eps.status();
    if (*eps <= target_epsilon) {
      hi = mid;
      achieved = *eps;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace dprel
