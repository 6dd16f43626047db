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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nvfp4lab/fp_codec.hpp"
#include "nvfp4lab/microscale.hpp"
#include "nvfp4lab/tensor.hpp"

// Hot-Channel Patch.
//
// Orientation: W is M x N, X is K x N, and the product is Y = W X^T (M x K).
// The N columns are the channels of the contraction. Residuals are
// original - dequantized:
//
//   dW = W - W^,   dX = X - X^.
//
// On a hot set I the configurations add, to the low-precision product W^ X^^T,
//
//   O1-A:  W^_I dX_I^T                  -> W X^T - dW_I X_I^T
//   O1-W:  dW_I X^_I^T                  -> W X^T - W_I dX_I^T
//   O2-B:  dW_I X^_I^T + W^_I dX_I^T    -> W X^T - dW_I dX_I^T
//
// (plus the untouched low-precision error on the channels outside I).
// Single mode folds the patch columns into the same accumulation as the base
// product; Dual mode accumulates them separately and adds the two results.
namespace nvfp4lab::hcp {

enum class Mode { Single, Dual };
enum class Order { O1, O2 };
enum class Target { W, A, B };
enum class PatchPrecision { Exact, Nvfp4 };

struct HcpConfig {
  Mode mode = Mode::Single;
  Order order = Order::O2;
  Target target = Target::B;
  std::size_t k = 0;
  PatchPrecision patch_precision = PatchPrecision::Nvfp4;

  /// Throws ConfigError for combinations outside the taxonomy (O2 needs B,
  /// O1 needs W or A) and DimensionError when k exceeds `channels`.
  void validate(std::size_t channels) const;

  /// "S-O2-B" style name.
  std::string name() const;

  /// Parses "{S|D}-{O1|O2}-{W|A|B}". k and patch precision are left at their
  /// defaults. Throws ConfigError.
  static HcpConfig parse(std::string_view text);
};

/// The six configurations of the taxonomy, in a fixed order.
std::vector<HcpConfig> all_configs();

/// ceil(0.0909 * channels).
std::size_t default_patch_count(std::size_t channels);

struct ChannelSet {
  std::vector<std::size_t> indices;  ///< strictly increasing
  std::vector<double> scores;        ///< score of each index
  std::int64_t step_created = 0;

  std::size_t size() const noexcept { return indices.size(); }
  friend bool operator==(const ChannelSet&, const ChannelSet&) = default;
};

/// Channel score weighting.
///   PerElement: s_j = (1/K) |dX[:,j]|_1 + (1/M) |dW[:,j]|_1
///   ColumnSum:  s_j = |dX[:,j]|_1 + |dW[:,j]|_1  (plain column L1 sums)
enum class ScoreNorm { PerElement, ColumnSum };

/// t - dequantize(q).
Tensor residuals(const Tensor& t, const micro::QuantizedTensor& q);

/// Scores for every channel. dX is K x N, dW is M x N.
std::vector<double> channel_scores(const Tensor& dx, const Tensor& dw,
                                   ScoreNorm norm = ScoreNorm::PerElement);

/// Indices of the k largest scores (ties toward the lower index), sorted.
ChannelSet select_hot_channels(std::span<const double> scores, std::size_t k,
                               std::int64_t step = 0);

/// Everything about a (W, X) pair that does not depend on the hot set.
struct PreparedProduct {
  Tensor w, x;
  micro::QuantizedTensor qw, qx;
  Tensor w_hat, x_hat;  ///< dequantized operands
  Tensor dw, dx;        ///< residuals
  Tensor base;          ///< low-precision product W^ X^^T
  codec::RoundingMode mode;

  std::size_t channels() const noexcept { return w.cols(); }
};

/// Quantizes both operands and forms the base product. With 1x16 blocks on
/// both sides the base is the blockwise-descaled qgemm; otherwise it is the
/// product of the dequantized operands. Under SR the two operands draw from
/// streams derived from mode.seed.
PreparedProduct prepare(const Tensor& w, const Tensor& x,
                        micro::BlockLayout w_layout = micro::BlockLayout::vec1x16(),
                        micro::BlockLayout x_layout = micro::BlockLayout::vec1x16(),
                        codec::RoundingMode mode = codec::RoundingMode::rtn());

/// Same, from operands that were already quantized.
PreparedProduct prepare(const Tensor& w, const Tensor& x, micro::QuantizedTensor qw,
                        micro::QuantizedTensor qx);

/// The appended contraction columns for cfg on `set`: W-side segments
/// (M x k each) and the matching X-side segments (K x k each). Nvfp4 patch
/// precision quantizes every segment on its own (1x16 blocks, zero padded to
/// a multiple of 16 columns, then cropped back).
std::pair<std::vector<Tensor>, std::vector<Tensor>> patch_segments(const PreparedProduct& p,
                                                                   const HcpConfig& cfg,
                                                                   const ChannelSet& set);

/// Single-kernel operands [W^ | segments] and [X^ | segments].
std::pair<Tensor, Tensor> build_patched_operands(const Tensor& w, const Tensor& x,
                                                 const micro::QuantizedTensor& qw,
                                                 const micro::QuantizedTensor& qx,
                                                 const ChannelSet& set, const HcpConfig& cfg);

/// Patched product on a fixed (pre-computed) hot set. cfg.k is ignored in
/// favour of set.size().
Tensor hcp_matmul(const PreparedProduct& p, const HcpConfig& cfg, const ChannelSet& set);

/// Patched product with the hot set selected from the residual scores.
Tensor hcp_matmul(const PreparedProduct& p, const HcpConfig& cfg,
                  ScoreNorm norm = ScoreNorm::PerElement);

/// One-call form: quantize, select, patch.
Tensor hcp_matmul(const Tensor& w, const Tensor& x, const HcpConfig& cfg,
                  micro::BlockLayout layout = micro::BlockLayout::vec1x16(),
                  codec::RoundingMode mode = codec::RoundingMode::rtn());

/// The estimate of W_I X_I^T (channels in `set` only) that cfg produces.
/// Passing nullopt gives the uncompensated estimate W^_I X^_I^T.
Tensor patched_contraction(const PreparedProduct& p, std::optional<HcpConfig> cfg,
                           const ChannelSet& set);

/// Mean of squared elementwise differences.
double mse(const Tensor& y, const Tensor& y_ref);

}  // namespace nvfp4lab::hcp
