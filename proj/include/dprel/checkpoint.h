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

#ifndef DPREL_CHECKPOINT_H_
#define DPREL_CHECKPOINT_H_

#include <cstdint>
#include <string>

#include "absl/status/statusor.h"
#include "dprel/encoder.h"

namespace dprel {

inline constexpr char kCheckpointMagic[8] = {'D', 'P', 'R', 'E',
                                             'L', 'C', 'K', 'P'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  EncoderParams params;
  // Free-form JSON object recorded alongside the parameters (seeds, config
  // lineage). "{}" when absent.
  std::string lineage_json = "{}";
};

// Layout (docs/FORMATS.md): 8-byte magic, u32 version, u64 header length,
// JSON header, then every parameter block as row-major little-endian
// float64 in header order.
absl::Status SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);
absl::StatusOr<Checkpoint> LoadCheckpoint(const std::string& path);

}  // namespace dprel

#endif  // DPREL_CHECKPOINT_H_
