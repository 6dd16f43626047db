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
#include <optional>
#include <ostream>
#include <string_view>
#include <vector>

#include "nvfp4lab/fp_codec.hpp"
#include "nvfp4lab/hcp.hpp"
#include "nvfp4lab/microscale.hpp"
#include "nvfp4lab/tensor.hpp"

// Fake-quantized linear layer Y = X W, X: tokens x in, W: in x out.
//
//   Fprop  Y  = X W      contraction over in
//   Dgrad  dX = dY W^T   contraction over out
//   Wgrad  dW = X^T dY   contraction over tokens
//
// Forward quantizes with forward_mode (RTN by default), the backward GEMMs
// with backward_mode (SR by default); Wgrad optionally goes through the
// randomized Hadamard transform. Gradients pass through the quantizers
// unchanged (straight-through). The dequantized weight produced in forward
// is reused by Dgrad.
namespace nvfp4lab::qlinear {

enum class QuantizerKind { Nvfp4, Identity };

enum class GemmRole : std::uint8_t { Fprop = 0, Dgrad = 1, Wgrad = 2 };

struct RecipeConfig {
  codec::RoundingMode forward_mode = codec::RoundingMode::rtn();
  codec::RoundingMode backward_mode = codec::RoundingMode::sr(0);
  bool use_rht = true;
  micro::BlockLayout weight_layout = micro::BlockLayout::tile16x16();
  micro::BlockLayout act_grad_layout = micro::BlockLayout::vec1x16();
  std::optional<hcp::HcpConfig> hcp;
  bool hcp_all_gemms = false;  ///< default: Fprop only
  bool high_precision = false;
  QuantizerKind quantizer = QuantizerKind::Nvfp4;  ///< Identity is a test hook
  std::uint64_t seed = 0;  ///< SR and sign streams derive from (seed, step, layer, role)
};

struct LayerState {
  Tensor w;                              ///< in x out
  std::uint64_t layer_id = 0;
  std::int64_t step = 0;
  std::optional<Tensor> cached_x;        ///< input of the last forward
  std::optional<Tensor> cached_w_hat_t;  ///< out x in, weight as used by the last forward
  std::array<std::optional<hcp::ChannelSet>, 3> channel_sets;  ///< indexed by GemmRole

  /// Drops persisted hot sets older than `interval` steps.
  void refresh_channel_sets(std::int64_t interval);
};

struct Gradients {
  Tensor dx;
  Tensor dw;
};

Tensor forward(const Tensor& x, LayerState& state, const RecipeConfig& cfg);

/// Throws StateError when no forward input is cached.
Gradients backward(const Tensor& dy, LayerState& state, const RecipeConfig& cfg);

// ---------------------------------------------------------------------------
// Toy trainer
// ---------------------------------------------------------------------------

enum class Variant { Exact, Nvfp4, NvfpHcp };
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct TrainOptions {
  std::size_t steps = 300;
  std::uint64_t seed = 0;
  Variant variant = Variant::Exact;
  double learning_rate = 0.04;
  std::int64_t refresh_interval = 100;  ///< hot-set refresh period
  /// Replaces the S-O2-B default of the HCP variant; k = 0 means the default count.
  std::optional<hcp::HcpConfig> hcp;
  std::optional<micro::BlockLayout> weight_layout;
  std::size_t diag_every = 0;           ///< 0 disables diagnostics output
  std::ostream* diag_out = nullptr;     ///< CSV rows (no header) when diag_every > 0
};

/// Dimensions of the fixture task.
inline constexpr std::size_t kToyIn = 64;
inline constexpr std::size_t kToyHidden = 256;
inline constexpr std::size_t kToyBatch = 256;

/// Builds the recipe a variant uses for every layer.
RecipeConfig recipe_for(Variant v, std::uint64_t seed, std::size_t in_features);

/// Trains the SwiGLU MLP 64 -> 256 -> 64 (y = (x Wu * silu(x Wg)) Wd) with
/// full-batch SGD on a fixed synthetic teacher-regression task. Returns the
/// loss (mean squared error of the forward pass actually taken) before each
/// update. Deterministic for (steps, seed, variant, learning_rate).
std::vector<double> toy_train(const TrainOptions& opts);

/// (loss_quantized - loss_baseline) / loss_baseline.
double loss_gap(double loss_quantized, double loss_baseline);

}  // namespace nvfp4lab::qlinear
