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

#include "nvfp4lab/fp_codec.hpp"

#include <cmath>
#include <limits>

#include "nvfp4lab/error.hpp"
#include "nvfp4lab/rng.hpp"

namespace nvfp4lab::codec {

namespace {

struct Minifloat {
  int man_bits;
  int bias;
  double max;
  std::uint8_t sign_bit;

  int min_normal_exp() const { return 1 - bias; }

  // Spacing of representable values in the binade containing magnitude a.
  double quantum(double a) const {
    const int e = a > 0.0 ? std::max(std::ilogb(a), min_normal_exp()) : min_normal_exp();
    return std::ldexp(1.0, e - man_bits);
  }

  // Magnitude -> unsigned code. v must be exactly representable.
  std::uint8_t encode_exact(double v) const {
    if (v == 0.0) return 0;
    const int e = std::ilogb(v);
    if (e < min_normal_exp()) {
      return static_cast<std::uint8_t>(v / std::ldexp(1.0, min_normal_exp() - man_bits));
    }
    const auto m = static_cast<unsigned>((std::ldexp(v, -e) - 1.0) * (1u << man_bits));
    return static_cast<std::uint8_t>((static_cast<unsigned>(e + bias) << man_bits) | m);
  }

  double decode_magnitude(std::uint8_t bits) const {
    const unsigned e = bits >> man_bits;
    const unsigned m = bits & ((1u << man_bits) - 1);
    if (e == 0) return std::ldexp(static_cast<double>(m), min_normal_exp() - man_bits);
    return std::ldexp(1.0 + std::ldexp(static_cast<double>(m), -man_bits),
                      static_cast<int>(e) - bias);
  }

  // Round-to-nearest, ties to even integer multiple of the quantum (= even
  // mantissa), saturating.
  double round_nearest(double a) const {
    if (a >= max) return max;
    const double q = quantum(a);
    return std::min(std::nearbyint(a / q) * q, max);
  }

  double round_up(double a) const {
    if (a >= max) return max;
    const double q = quantum(a);
    return std::min(std::ceil(a / q) * q, max);
  }
};

constexpr Minifloat kE2M1{1, 1, kE2M1Max, 0x8};
constexpr Minifloat kE4M3{3, 7, kE4M3Max, 0x80};

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw CodecError(std::string(what) + ": non-finite input");
}

std::uint8_t with_sign(const Minifloat& f, double x, double magnitude) {
  const std::uint8_t code = f.encode_exact(magnitude);
  // Zero always encodes with a clear sign bit.
  return (x < 0.0 && code != 0) ? static_cast<std::uint8_t>(code | f.sign_bit) : code;
}

}  // namespace

double decode_e2m1(Fp4Code code) noexcept {
  const std::uint8_t bits = code.bits & 0x0F;
  const double mag = kE2M1.decode_magnitude(bits & 0x07);
  if (mag == 0.0) return 0.0;
  return (bits & 0x08) ? -mag : mag;
}

std::array<std::pair<Fp4Code, double>, 16> e2m1_value_table() noexcept {
  std::array<std::pair<Fp4Code, double>, 16> table{};
  for (std::uint8_t c = 0; c < 16; ++c) table[c] = {Fp4Code{c}, decode_e2m1(Fp4Code{c})};
  return table;
}

Fp4Code quantize_e2m1(double x, RoundingMode mode, std::uint64_t index) {
  require_finite(x, "quantize_e2m1");
  const double a = std::abs(x);
  double mag;
  if (!mode.stochastic() || a >= kE2M1Max) {
    mag = kE2M1.round_nearest(a);
  } else {
    const double q = kE2M1.quantum(a);
    const double lo = std::floor(a / q) * q;
    const double p = (a - lo) / q;
    const double u = CounterRng(mode.seed).uniform(index);
    mag = (u < p) ? lo + q : lo;
  }
  return Fp4Code{with_sign(kE2M1, x, mag)};
}

double decode_e4m3(Fp8E4M3Code code) noexcept {
  if (is_nan(code)) return std::numeric_limits<double>::quiet_NaN();
  const double mag = kE4M3.decode_magnitude(code.bits & 0x7F);
  if (mag == 0.0) return 0.0;
  return (code.bits & 0x80) ? -mag : mag;
}

Fp8E4M3Code quantize_e4m3(double x) {
  require_finite(x, "quantize_e4m3");
  return Fp8E4M3Code{with_sign(kE4M3, x, kE4M3.round_nearest(std::abs(x)))};
}

Fp8E4M3Code quantize_e4m3_ceil(double x) {
  require_finite(x, "quantize_e4m3_ceil");
  if (x < 0.0) throw CodecError("quantize_e4m3_ceil: negative scale");
  return Fp8E4M3Code{kE4M3.encode_exact(kE4M3.round_up(x))};
}

bool is_nan(Fp8E4M3Code code) noexcept { return (code.bits & 0x7F) == 0x7F; }

}  // namespace nvfp4lab::codec
