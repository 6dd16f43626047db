// Copyright 2026 The nvfp4lab Authors
// SPDX-License-Identifier: Apache-2.0
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

#pragma once

#include <cstdint>

namespace nvfp4lab {

/// Counter-based random bits.
///
/// Every draw is a pure function of (seed, stream, counter):
///
///   key  = splitmix64(seed ^ splitmix64(stream))
///   bits = splitmix64(key + counter * 0x9E3779B97F4A7C15)
///
/// where splitmix64 is the SplitMix64 output function (Steele, Lea & Flood,
/// 2014) including its golden-ratio increment. No state is carried between
/// draws, so results do not depend on evaluation order or thread count, and
/// any implementation of the formula above reproduces the same samples.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(splitmix64(seed ^ splitmix64(stream))) {}

  static constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    std::uint64_t z = x + kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return splitmix64(key_ + counter * kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Uniform in the open interval (0, 1).
  constexpr double uniform_open(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
};

/// Derives a child seed from a parent seed and a list of coordinates.
/// Used to give each sweep cell, layer, or GEMM role its own stream.
constexpr std::uint64_t derive_seed(std::uint64_t seed) noexcept { return seed; }

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t coord,
                                    Rest... rest) noexcept {
  const std::uint64_t mixed =
      CounterRng::splitmix64(seed ^ CounterRng::splitmix64(coord + 0x5851F42D4C957F2DULL));
  return derive_seed(mixed, static_cast<std::uint64_t>(rest)...);
}

}  // namespace nvfp4lab
