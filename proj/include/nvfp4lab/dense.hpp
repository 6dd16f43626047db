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
#include <span>
#include <string_view>
#include <vector>

#include "nvfp4lab/tensor.hpp"

namespace nvfp4lab {

// ---------------------------------------------------------------------------
// GEMM
//
// All products accumulate in double, term by term in increasing contraction
// index, starting from zero (or from the supplied accumulator). The OpenMP
// kernels split work over output rows only, so the result is bit-identical
// to the serial kernels in nvfp4lab::reference for any thread count.
// ---------------------------------------------------------------------------

/// c = a * b, a: m x n, b: n x k.
Tensor gemm(const Tensor& a, const Tensor& b);

/// c = a * b^T, a: m x n, b: k x n. Both operands are contraction-major.
Tensor gemm_nt(const Tensor& a, const Tensor& b);

/// Continues the accumulation of `acc` with a * b^T. The result equals the
/// gemm_nt of the column-concatenated operands [a0 a] * [b0 b]^T bit for bit
/// when acc = gemm_nt(a0, b0).
Tensor gemm_nt_accumulate(const Tensor& acc, const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Elementwise and structural helpers
// ---------------------------------------------------------------------------

Tensor transpose(const Tensor& t);
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, double alpha);
Tensor hadamard_product(const Tensor& a, const Tensor& b);

/// Concatenates matrices along columns (they must share rows()).
Tensor concat_cols(std::span<const Tensor> parts);

/// Keeps the listed columns, in the given order.
Tensor gather_cols(const Tensor& t, std::span<const std::size_t> cols);

/// Zero-pads a matrix to the given size (both must be >= the current size).
Tensor pad_to(const Tensor& t, std::size_t rows, std::size_t cols);

/// Keeps the leading rows x cols sub-matrix.
Tensor crop_to(const Tensor& t, std::size_t rows, std::size_t cols);

/// Squared Frobenius norm, sum of x^2.
double frobenius_energy(const Tensor& t);

/// max|a - b| / max|b|; returns max|a - b| when b is all zero.
double max_relative_error(const Tensor& a, const Tensor& b);

/// ||a - b||_F / ||b||_F; returns ||a - b||_F when b is all zero.
double relative_frobenius_error(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Random priors
// ---------------------------------------------------------------------------

enum class Distribution { Gaussian, Laplace };

std::string_view to_string(Distribution d);
Distribution parse_distribution(std::string_view name);

struct PriorSpec {
  Distribution distribution = Distribution::Gaussian;
  double scale = 1.0;  ///< std-dev for Gaussian, b for Laplace
  std::uint64_t seed = 0;
};

/// Deterministic sample from the prior: element i uses counters derived from
/// (seed, i) only. Gaussian uses Box-Muller on counters 2i and 2i+1; Laplace
/// uses the inverse CDF on counter i.
Tensor sample_prior(const PriorSpec& spec, Shape shape);

}  // namespace nvfp4lab
