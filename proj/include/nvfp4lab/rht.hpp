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
#include <vector>

#include "nvfp4lab/fp_codec.hpp"
#include "nvfp4lab/microscale.hpp"
#include "nvfp4lab/tensor.hpp"

// Randomized Hadamard transform along the leading (token) dimension.
//
// H is the normalized Sylvester-Hadamard matrix, H[i][j] = (-1)^popcount(i&j)/sqrt(n),
// so H H^T = I and H is its own inverse. The randomized transform of a
// matrix T with n rows is H D T, D = diag(signs).
namespace nvfp4lab::rht {

class SignDiagonal {
 public:
  /// length must be a power of two.
  SignDiagonal(std::uint64_t seed, std::size_t length);

  /// All +1.
  static SignDiagonal identity(std::size_t length);

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t length() const noexcept { return signs_.size(); }
  const std::vector<double>& signs() const noexcept { return signs_; }

 private:
  SignDiagonal() = default;
  std::uint64_t seed_ = 0;
  std::vector<double> signs_;
};

/// Smallest power of two >= max(n, minimum).
std::size_t next_power_of_two(std::size_t n, std::size_t minimum = 1);

/// Normalized fast Walsh-Hadamard transform along dimension 0. The leading
/// dimension must be a power of two (DimensionError otherwise).
Tensor walsh_hadamard(const Tensor& t);

/// H D t.
Tensor rht_apply(const Tensor& t, const SignDiagonal& d);

struct WgradOptions {
  bool quantize = true;
  bool use_rht = true;
  codec::RoundingMode mode = codec::RoundingMode::sr(0);
  micro::BlockLayout layout = micro::BlockLayout::vec1x16();
  std::uint64_t d_seed = 0;
  /// Draw a second, independent sign diagonal for dY. Breaks the exact
  /// invariance; only for comparison runs.
  bool independent_d = false;
};

/// dW = X^T dY for x (n x b) and dy (n x o), contracting over the n tokens.
///
/// Tokens are zero-padded to a power of two (at least 16 when quantizing).
/// With use_rht both operands are transformed by the same H D. With quantize
/// the transformed operands are quantized along the token axis and
/// multiplied blockwise (qgemm for 1x16 blocks, dequantized product for
/// 16x16 tiles).
Tensor wgrad_with_rht(const Tensor& x, const Tensor& dy, const WgradOptions& opts = {});

}  // namespace nvfp4lab::rht
