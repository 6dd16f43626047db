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

#include <array>
#include <cstdint>
#include <utility>

// Scalar codecs for the two NVFP4 element formats.
//
//   FP4 E2M1: s.ee.m, bias 1, subnormal step 0.5, max 6, no Inf/NaN.
//   FP8 E4M3: s.eeee.mmm, bias 7, subnormal step 2^-9, max finite 448,
//             no Inf, NaN at exponent 1111 / mantissa 111 (never produced).
//
// RTN rounds to nearest with ties to the even code (which is the code with a
// zero mantissa LSB). Magnitudes above the format maximum saturate.
namespace nvfp4lab::codec {

struct Fp4Code {
  std::uint8_t bits = 0;  ///< low nibble only
  friend constexpr bool operator==(Fp4Code, Fp4Code) = default;
};

struct Fp8E4M3Code {
  std::uint8_t bits = 0;
  friend constexpr bool operator==(Fp8E4M3Code, Fp8E4M3Code) = default;
};

inline constexpr double kE2M1Max = 6.0;
inline constexpr double kE4M3Max = 448.0;

struct RoundingMode {
  enum class Kind { RTN, SR };
  Kind kind = Kind::RTN;
  std::uint64_t seed = 0;  ///< SR stream id; ignored for RTN

  static constexpr RoundingMode rtn() noexcept { return {Kind::RTN, 0}; }
  static constexpr RoundingMode sr(std::uint64_t seed) noexcept { return {Kind::SR, seed}; }
  constexpr bool stochastic() const noexcept { return kind == Kind::SR; }
};

double decode_e2m1(Fp4Code code) noexcept;

/// All 16 (code, value) pairs in code order.
std::array<std::pair<Fp4Code, double>, 16> e2m1_value_table() noexcept;

/// Quantizes x to E2M1. For SR, the draw for this element is keyed by
/// (mode.seed, index), so the result does not depend on call order.
/// Throws CodecError for non-finite x.
Fp4Code quantize_e2m1(double x, RoundingMode mode = RoundingMode::rtn(),
                      std::uint64_t index = 0);

/// Decodes an E4M3 code. The NaN patterns decode to NaN; -0 decodes to +0.
double decode_e4m3(Fp8E4M3Code code) noexcept;

/// RTN encode to E4M3, saturating at 448. Throws CodecError for non-finite x.
Fp8E4M3Code quantize_e4m3(double x);

/// Encodes a non-negative x to the smallest E4M3 value >= x, saturating at
/// 448. Used for block scales under stochastic rounding so that no scaled
/// element exceeds the E2M1 range (a clipped element would bias SR).
Fp8E4M3Code quantize_e4m3_ceil(double x);

bool is_nan(Fp8E4M3Code code) noexcept;

}  // namespace nvfp4lab::codec
