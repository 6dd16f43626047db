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

#include "nvfp4lab/rht.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "nvfp4lab/dense.hpp"
#include "nvfp4lab/error.hpp"
#include "nvfp4lab/rng.hpp"

namespace nvfp4lab::rht {

namespace {

constexpr std::uint64_t kSignStream = 0x5248;  // "RH"

}  // namespace

SignDiagonal::SignDiagonal(std::uint64_t seed, std::size_t length) : seed_(seed) {
  if (!std::has_single_bit(length)) {
    throw DimensionError("sign diagonal length " + std::to_string(length) +
                         " is not a power of two");
  }
  const CounterRng rng(seed, kSignStream);
  signs_.resize(length);
  for (std::size_t i = 0; i < length; ++i) signs_[i] = (rng.bits(i) >> 63) ? -1.0 : 1.0;
}

SignDiagonal SignDiagonal::identity(std::size_t length) {
  if (!std::has_single_bit(length)) {
    throw DimensionError("sign diagonal length " + std::to_string(length) +
                         " is not a power of two");
  }
  SignDiagonal d;
  d.signs_.assign(length, 1.0);
  return d;
}

std::size_t next_power_of_two(std::size_t n, std::size_t minimum) {
  return std::bit_ceil(std::max({n, minimum, std::size_t{1}}));
}

Tensor walsh_hadamard(const Tensor& t) {
  const std::size_t n = t.shape().front();
  if (!std::has_single_bit(n)) {
    throw DimensionError("walsh_hadamard: leading dimension " + std::to_string(n) +
                         " is not a power of two");
  }
  const std::size_t inner = t.size() / n;
  std::vector<double> v = Tensor(t).release();
  for (std::size_t h = 1; h < n; h <<= 1) {
    const auto groups = static_cast<std::ptrdiff_t>(n / (2 * h));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t g = 0; g < groups; ++g) {
      const std::size_t base = static_cast<std::size_t>(g) * 2 * h;
      for (std::size_t i = base; i < base + h; ++i) {
        double* a = v.data() + i * inner;
        double* b = v.data() + (i + h) * inner;
        for (std::size_t c = 0; c < inner; ++c) {
          const double x = a[c], y = b[c];
          a[c] = x + y;
          b[c] = x - y;
        }
      }
    }
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (double& x : v) x *= norm;
  return Tensor(t.shape(), std::move(v));
}

Tensor rht_apply(const Tensor& t, const SignDiagonal& d) {
  const std::size_t n = t.shape().front();
  if (d.length() != n) {
    throw DimensionError("rht_apply: sign diagonal of length " + std::to_string(d.length()) +
                         " for leading dimension " + std::to_string(n));
  }
  const std::size_t inner = t.size() / n;
  std::vector<double> v = Tensor(t).release();
  for (std::size_t i = 0; i < n; ++i)
    if (d.signs()[i] < 0)
      for (std::size_t c = 0; c < inner; ++c) v[i * inner + c] = -v[i * inner + c];
  return walsh_hadamard(Tensor(t.shape(), std::move(v)));
}

Tensor wgrad_with_rht(const Tensor& x, const Tensor& dy, const WgradOptions& opts) {
  if (x.rank() != 2 || dy.rank() != 2 || x.rows() != dy.rows()) {
    throw DimensionError("wgrad: X " + shape_to_string(x.shape()) + " and dY " +
                         shape_to_string(dy.shape()) + " must share the token dimension");
  }
  const std::size_t n = next_power_of_two(x.rows(), opts.quantize ? 16 : 1);
  Tensor xt = pad_to(x, n, x.cols());
  Tensor gt = pad_to(dy, n, dy.cols());
  if (opts.use_rht) {
    const SignDiagonal d(opts.d_seed, n);
    xt = rht_apply(xt, d);
    gt = rht_apply(gt, opts.independent_d ? SignDiagonal(derive_seed(opts.d_seed, 1), n) : d);
  }
  // Contraction-major operands: b x n and o x n.
  xt = transpose(xt);
  gt = transpose(gt);
  if (!opts.quantize) return gemm_nt(xt, gt);

  codec::RoundingMode mx = opts.mode, mg = opts.mode;
  if (opts.mode.stochastic()) {
    mx.seed = derive_seed(opts.mode.seed, 0);
    mg.seed = derive_seed(opts.mode.seed, 1);
  }
  if (opts.layout == micro::BlockLayout::vec1x16()) {
    return micro::qgemm(micro::quantize_tensor(xt, opts.layout, mx),
                        micro::quantize_tensor(gt, opts.layout, mg));
  }
  return gemm_nt(micro::fake_quantize(xt, opts.layout, mx), micro::fake_quantize(gt, opts.layout, mg));
}

}  // namespace nvfp4lab::rht
