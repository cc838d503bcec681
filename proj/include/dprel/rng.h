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

#ifndef DPREL_RNG_H_
#define DPREL_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace dprel {

// Every random draw in the library comes from a generator seeded through
// StreamSeed(). Stream names in use:
//   "init"      parameter initialization
//   "split"     train/eval relation split
//   "synth"     synthetic graph generation
//   "sampling"  Poisson inclusion of positive relations
//   "negatives" decoupled negative sampling (per tuple)
//   "noise"     Gaussian noise of the privatized gradient (per step)
//   "eval"      evaluation batching and probe/audit sampling
//   "rr"        randomized-response baseline
using Rng = std::mt19937_64;

// SplitMix64 finalizer; a bijection on 64-bit words.
constexpr uint64_t Mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// 64-bit FNV-1a. Stable across platforms and runs, unlike std::hash.
constexpr uint64_t HashName(std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives the seed of a named sub-stream. Extra words (step index, relation
// endpoints, ...) are chained through Mix64 so that distinct tuples of inputs
// land on unrelated seeds.
constexpr uint64_t StreamSeed(uint64_t seed, std::string_view stream,
                              uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = Mix64(seed ^ HashName(stream));
  h = Mix64(h ^ a);
  h = Mix64(h ^ (b + 0x632be59bd9b4e019ULL));
  h = Mix64(h ^ (c + 0x8cb92ba72f3d8dd7ULL));
  return h;
}

// Maps a 64-bit key to a double in [0, 1) using its top 53 bits.
constexpr double UnitInterval(uint64_t key) {
  return static_cast<double>(key >> 11) * 0x1.0p-53;
}

inline Rng MakeRng(uint64_t seed, std::string_view stream, uint64_t a = 0,
                   uint64_t b = 0, uint64_t c = 0) {
  return Rng(StreamSeed(seed, stream, a, b, c));
}

}  // namespace dprel

#endif  // DPREL_RNG_H_
