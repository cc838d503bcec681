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

#ifndef DPREL_ACCOUNTANT_H_
#define DPREL_ACCOUNTANT_H_

#include <cstdint>
#include <vector>

#include "absl/status/statusor.h"

namespace dprel {

// Renyi DP of one step of the Poisson-subsampled Gaussian mechanism with
// sampling ratio q and noise multiplier sigma at integer order alpha >= 2:
//   (1 / (alpha - 1)) ln sum_j C(alpha, j) (1-q)^(alpha-j) q^j
//                                  exp(j (j - 1) / (2 sigma^2)),
// evaluated in log space.
double RdpSubsampledGaussian(double q, double sigma, int alpha);

// Orders 1.25, 1.5, 1.75 followed by the integers 2..256.
const std::vector<double>& DefaultRdpOrders();

struct MechanismRecord {
  double q = 0.0;
  double sigma = 0.0;
  int64_t steps = 0;
};

struct EpsilonResult {
  double epsilon = 0.0;
  double order = 0.0;
};

// Accumulates per-order RDP under composition. Fractional orders use the
// value at ceil(alpha); RDP is non-decreasing in alpha, so this only loosens.
class RdpAccountant {
 public:
  RdpAccountant();

  // rdp[alpha] += steps * RDP(q, sigma, alpha).
  absl::Status Compose(double q, double sigma, int64_t steps);

  // min over orders of
  //   rdp + ln((alpha - 1) / alpha) - (ln delta + ln alpha) / (alpha - 1),
  // clamped at zero. An empty history gives epsilon = 0.
  absl::StatusOr<EpsilonResult> ToEpsilon(double delta) const;

  const std::vector<double>& orders() const { return orders_; }
  const std::vector<double>& rdp() const { return rdp_; }
  const std::vector<MechanismRecord>& history() const { return history_; }

 private:
  std::vector<double> orders_;
  std::vector<double> rdp_;
  std::vector<MechanismRecord> history_;
  // Single-step curve of the most recent (q, sigma).
  double cached_q_ = -1.0;
  double cached_sigma_ = -1.0;
  std::vector<double> cached_step_;
};

// Epsilon of T steps at (q, sigma) for the given delta.
absl::StatusOr<double> ComputeEpsilon(double q, double sigma, int64_t steps,
                                      double delta);

inline constexpr double kMinSigma = 0.05;
inline constexpr double kMaxSigma = 1000.0;

// Bisection for the smallest sigma in [kMinSigma, kMaxSigma] whose epsilon
// does not exceed the target; stops once the achieved epsilon is within 0.01
// below the target or the bracket is narrower than 1e-4.
absl::StatusOr<double> CalibrateSigma(double target_epsilon, double delta,
                                      double q, int64_t steps);

}  // namespace dprel

#endif  // DPREL_ACCOUNTANT_H_
