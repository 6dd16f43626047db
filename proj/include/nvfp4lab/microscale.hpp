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
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "nvfp4lab/fp_codec.hpp"
#include "nvfp4lab/tensor.hpp"

// Two-level NVFP4 microscaling.
//
// A tensor x is scaled by a global FP32-style encode scale
//
//     s_enc = (6 * 448) / amax(x),     s_dec = 1 / s_enc
//
// and by one FP8-stored decode scale per block,
//
//     scale_b = e4m3(amax_b / 6 * s_enc).
//
// The effective per-block encode scale is recovered from the stored code,
// eff_enc_b = 1 / (decode(scale_b) * s_dec), and elements are coded as
// e2m1(x_i * eff_enc_b). Dequantization is e2m1(code) * decode(scale_b) * s_dec.
namespace nvfp4lab::micro {

enum class BlockKind : std::uint8_t { Vec1x16 = 0, Tile16x16 = 1 };

/// Partition of a matrix (rows() x cols() view) into scale blocks.
/// Vec1x16 groups 16 consecutive elements of a row; Tile16x16 groups 16x16
/// tiles. Both dimensions must be exact multiples of the block dimensions.
struct BlockLayout {
  BlockKind kind = BlockKind::Vec1x16;

  static constexpr BlockLayout vec1x16() noexcept { return {BlockKind::Vec1x16}; }
  static constexpr BlockLayout tile16x16() noexcept { return {BlockKind::Tile16x16}; }

  constexpr std::size_t block_rows() const noexcept { return kind == BlockKind::Vec1x16 ? 1 : 16; }
  constexpr std::size_t block_cols() const noexcept { return 16; }

  /// Throws DimensionError if the layout does not divide rows x cols.
  void check_divides(std::size_t rows, std::size_t cols) const;
  std::size_t block_count(std::size_t rows, std::size_t cols) const noexcept;
  std::size_t block_of(std::size_t r, std::size_t c, std::size_t cols) const noexcept;

  friend constexpr bool operator==(BlockLayout, BlockLayout) = default;
};

std::string_view to_string(BlockLayout layout);

struct GlobalScales {
  double s_enc = 1.0;
  double s_dec = 1.0;
};

/// How block scales are rounded into E4M3.
enum class ScaleRounding { Nearest, Up };

struct ScaleSet {
  double s_enc = 1.0;
  double s_dec = 1.0;
  std::vector<codec::Fp8E4M3Code> block_scales;
  std::vector<double> eff_enc;  ///< 0 for blocks whose stored scale is zero
};

/// Packed two-level-quantized tensor: two E2M1 codes per byte, low nibble
/// holds the even element index.
class QuantizedTensor {
 public:
  QuantizedTensor() = default;
  QuantizedTensor(Shape shape, BlockLayout layout, std::vector<std::uint8_t> packed_codes,
                  ScaleSet scales);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t size() const noexcept { return size_; }
  BlockLayout layout() const noexcept { return layout_; }
  const ScaleSet& scales() const noexcept { return scales_; }
  std::span<const std::uint8_t> packed_codes() const noexcept { return packed_; }

  codec::Fp4Code code(std::size_t i) const noexcept {
    const std::uint8_t byte = packed_[i >> 1];
    return {static_cast<std::uint8_t>((i & 1) ? (byte >> 4) : (byte & 0x0F))};
  }

  /// decode_e4m3(block scale) * s_dec for block b.
  double block_decode_scale(std::size_t b) const noexcept;

 private:
  Shape shape_;
  std::size_t size_ = 0;
  BlockLayout layout_;
  std::vector<std::uint8_t> packed_;
  ScaleSet scales_;
};

/// Global scales from amax(t). Returns nullopt for an all-zero tensor; callers
/// then use s_enc = s_dec = 1.
std::optional<GlobalScales> compute_global_scales(const Tensor& t);

/// Global scales with the all-zero convention applied.
GlobalScales global_scales_or_unit(const Tensor& t);

ScaleSet compute_block_scales(const Tensor& t, BlockLayout layout, double s_enc,
                              ScaleRounding rounding = ScaleRounding::Nearest);

/// Quantizes t. SR draws for element i (row-major flat index) are keyed by
/// (mode.seed, i). Under SR the block scales are rounded up (see
/// quantize_e4m3_ceil) so scaled elements never saturate.
QuantizedTensor quantize_tensor(const Tensor& t, BlockLayout layout,
                                codec::RoundingMode mode = codec::RoundingMode::rtn());

Tensor dequantize_tensor(const QuantizedTensor& q);

/// quantize then dequantize.
Tensor fake_quantize(const Tensor& t, BlockLayout layout,
                     codec::RoundingMode mode = codec::RoundingMode::rtn());

/// Fraction of all elements whose RTN E2M1 code is zero after block scaling.
/// Structural zeros count as flushed.
double ftz_ratio(const Tensor& t, BlockLayout layout);

/// Blockwise-descaled product of two contraction-major operands:
/// qa is m x n, qb is k x n, both Vec1x16. Returns the m x k matrix
///
///   c[i][j] = s_dec_a * s_dec_b * sum_b (sa_b * sb_b * sum_{t in b} a_it * b_jt).
Tensor qgemm(const QuantizedTensor& qa, const QuantizedTensor& qb);

}  // namespace nvfp4lab::micro
