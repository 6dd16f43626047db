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

#include "nvfp4lab/reference.hpp"

#include <bit>
#include <cmath>

#include "nvfp4lab/error.hpp"

namespace nvfp4lab::reference {

using micro::BlockLayout;
using micro::QuantizedTensor;

Tensor gemm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw DimensionError("reference::gemm: inner dimensions differ");
  const std::size_t m = a.rows(), n = a.cols(), k = b.cols();
  std::vector<double> c(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double sum = 0.0;
      for (std::size_t t = 0; t < n; ++t) sum += a.at(i, t) * b.at(t, j);
      c[i * k + j] = sum;
    }
  return Tensor::matrix(m, k, std::move(c));
}

QuantizedTensor quantize_tensor(const Tensor& t, BlockLayout layout, codec::RoundingMode mode) {
  layout.check_divides(t.rows(), t.cols());
  const micro::GlobalScales g = micro::global_scales_or_unit(t);
  micro::ScaleSet scales = micro::compute_block_scales(
      t, layout, g.s_enc,
      mode.stochastic() ? micro::ScaleRounding::Up : micro::ScaleRounding::Nearest);
  std::vector<std::uint8_t> packed((t.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::size_t r = i / t.cols(), c = i % t.cols();
    const double e = scales.eff_enc[layout.block_of(r, c, t.cols())];
    const std::uint8_t code = e == 0.0 ? 0 : codec::quantize_e2m1(t[i] * e, mode, i).bits;
    if (i % 2 == 0) packed[i / 2] = code;
    else packed[i / 2] |= static_cast<std::uint8_t>(code << 4);
  }
  return QuantizedTensor(t.shape(), layout, std::move(packed), std::move(scales));
}

Tensor qgemm(const QuantizedTensor& qa, const QuantizedTensor& qb) {
  if (qa.layout() != BlockLayout::vec1x16() || qb.layout() != BlockLayout::vec1x16() ||
      qa.cols() != qb.cols())
    throw DimensionError("reference::qgemm: incompatible operands");
  const std::size_t m = qa.rows(), k = qb.rows(), n = qa.cols(), nb = n / 16;
  std::vector<double> c(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t blk = 0; blk < nb; ++blk) {
        double partial = 0.0;
        for (std::size_t t = blk * 16; t < blk * 16 + 16; ++t)
          partial += codec::decode_e2m1(qa.code(i * n + t)) * codec::decode_e2m1(qb.code(j * n + t));
        const double sa = codec::decode_e4m3(qa.scales().block_scales[i * nb + blk]);
        const double sb = codec::decode_e4m3(qb.scales().block_scales[j * nb + blk]);
        acc += partial * (sa * sb);
      }
      c[i * k + j] = acc * (qa.scales().s_dec * qb.scales().s_dec);
    }
  return Tensor::matrix(m, k, std::move(c));
}

Tensor walsh_hadamard(const Tensor& t) {
  const std::size_t n = t.shape().front();
  if (!std::has_single_bit(n)) throw DimensionError("reference::walsh_hadamard: length not a power of two");
  const std::size_t inner = t.size() / n;
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<double> out(t.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (std::popcount(i & j) % 2 ? -norm : norm);
      for (std::size_t c = 0; c < inner; ++c) out[i * inner + c] += h * t[j * inner + c];
    }
  return Tensor(t.shape(), std::move(out));
}

}  // namespace nvfp4lab::reference
