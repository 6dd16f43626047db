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

#include "nvfp4lab/microscale.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nvfp4lab/error.hpp"

namespace nvfp4lab::micro {

using codec::Fp4Code;
using codec::Fp8E4M3Code;
using codec::RoundingMode;

void BlockLayout::check_divides(std::size_t rows, std::size_t cols) const {
  if (rows == 0 || cols == 0 || rows % block_rows() != 0 || cols % block_cols() != 0) {
    throw DimensionError("layout " + std::string(to_string(*this)) + " does not divide " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

std::size_t BlockLayout::block_count(std::size_t rows, std::size_t cols) const noexcept {
  return (rows / block_rows()) * (cols / block_cols());
}

std::size_t BlockLayout::block_of(std::size_t r, std::size_t c, std::size_t cols) const noexcept {
  return (r / block_rows()) * (cols / block_cols()) + c / block_cols();
}

std::string_view to_string(BlockLayout layout) {
  return layout.kind == BlockKind::Vec1x16 ? "1x16" : "16x16";
}

QuantizedTensor::QuantizedTensor(Shape shape, BlockLayout layout,
                                 std::vector<std::uint8_t> packed_codes, ScaleSet scales)
    : shape_(std::move(shape)), layout_(layout), packed_(std::move(packed_codes)),
      scales_(std::move(scales)) {
  size_ = 1;
  for (std::size_t d : shape_) size_ *= d;
  if (shape_.empty() || packed_.size() != (size_ + 1) / 2) {
    throw DimensionError("quantized tensor: code payload does not match shape");
  }
  layout_.check_divides(rows(), cols());
  const std::size_t blocks = layout_.block_count(rows(), cols());
  if (scales_.block_scales.size() != blocks || scales_.eff_enc.size() != blocks) {
    throw DimensionError("quantized tensor: expected " + std::to_string(blocks) + " block scales");
  }
}

std::size_t QuantizedTensor::rows() const noexcept {
  if (shape_.empty()) return 0;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
  return r;
}

double QuantizedTensor::block_decode_scale(std::size_t b) const noexcept {
  return codec::decode_e4m3(scales_.block_scales[b]) * scales_.s_dec;
}

std::optional<GlobalScales> compute_global_scales(const Tensor& t) {
  double amax = 0.0;
  for (double v : t.values()) amax = std::max(amax, std::abs(v));
  if (amax == 0.0) return std::nullopt;
  const double s_enc = (codec::kE2M1Max * codec::kE4M3Max) / amax;
  return GlobalScales{s_enc, 1.0 / s_enc};
}

GlobalScales global_scales_or_unit(const Tensor& t) {
  return compute_global_scales(t).value_or(GlobalScales{1.0, 1.0});
}

ScaleSet compute_block_scales(const Tensor& t, BlockLayout layout, double s_enc,
                              ScaleRounding rounding) {
  const std::size_t rows = t.rows(), cols = t.cols();
  layout.check_divides(rows, cols);
  const std::size_t blocks = layout.block_count(rows, cols);

  std::vector<double> amax(blocks, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = t.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      double& m = amax[layout.block_of(r, c, cols)];
      m = std::max(m, std::abs(row[c]));
    }
  }

  ScaleSet s;
  s.s_enc = s_enc;
  s.s_dec = 1.0 / s_enc;
  s.block_scales.resize(blocks);
  s.eff_enc.resize(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    const double s_dec_b = amax[b] / codec::kE2M1Max;
    const Fp8E4M3Code code = rounding == ScaleRounding::Up
                                 ? codec::quantize_e4m3_ceil(s_dec_b * s_enc)
                                 : codec::quantize_e4m3(s_dec_b * s_enc);
    const double stored = codec::decode_e4m3(code);
    s.block_scales[b] = code;
    // A nonzero block whose scale underflows FP8 is flushed with it.
    s.eff_enc[b] = stored > 0.0 ? 1.0 / (stored * s.s_dec) : 0.0;
  }
  return s;
}

QuantizedTensor quantize_tensor(const Tensor& t, BlockLayout layout, RoundingMode mode) {
  const std::size_t rows = t.rows(), cols = t.cols();
  layout.check_divides(rows, cols);
  const GlobalScales g = global_scales_or_unit(t);
  ScaleSet scales = compute_block_scales(
      t, layout, g.s_enc, mode.stochastic() ? ScaleRounding::Up : ScaleRounding::Nearest);

  // cols is a multiple of 16, so rows never share a packed byte.
  std::vector<std::uint8_t> packed((t.size() + 1) / 2, 0);
  const double* x = t.values().data();
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ri = 0; ri < nrows; ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      const double e = scales.eff_enc[layout.block_of(r, c, cols)];
      const std::uint8_t code = e == 0.0 ? 0 : codec::quantize_e2m1(x[i] * e, mode, i).bits;
      packed[i >> 1] |= static_cast<std::uint8_t>((i & 1) ? (code << 4) : code);
    }
  }
  return QuantizedTensor(t.shape(), layout, std::move(packed), std::move(scales));
}

Tensor dequantize_tensor(const QuantizedTensor& q) {
  const std::size_t rows = q.rows(), cols = q.cols();
  const BlockLayout layout = q.layout();
  const double s_dec = q.scales().s_dec;
  std::vector<double> out(q.size());
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ri = 0; ri < nrows; ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      const double sb = codec::decode_e4m3(q.scales().block_scales[layout.block_of(r, c, cols)]);
      // e2m1 * e4m3 is exact; the global decode scale adds the only rounding.
      out[i] = (codec::decode_e2m1(q.code(i)) * sb) * s_dec;
    }
  }
  return Tensor(q.shape(), std::move(out));
}

Tensor fake_quantize(const Tensor& t, BlockLayout layout, RoundingMode mode) {
  return dequantize_tensor(quantize_tensor(t, layout, mode));
}

double ftz_ratio(const Tensor& t, BlockLayout layout) {
  const QuantizedTensor q = quantize_tensor(t, layout, RoundingMode::rtn());
  std::size_t flushed = 0;
  for (std::size_t i = 0; i < q.size(); ++i) flushed += (q.code(i).bits & 0x7) == 0;
  return static_cast<double>(flushed) / static_cast<double>(q.size());
}

namespace {

std::vector<double> decoded_elements(const QuantizedTensor& q) {
  std::vector<double> v(q.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = codec::decode_e2m1(q.code(i));
  return v;
}

std::vector<double> decoded_block_scales(const QuantizedTensor& q) {
  std::vector<double> v(q.scales().block_scales.size());
  for (std::size_t b = 0; b < v.size(); ++b) v[b] = codec::decode_e4m3(q.scales().block_scales[b]);
  return v;
}

}  // namespace

Tensor qgemm(const QuantizedTensor& qa, const QuantizedTensor& qb) {
  if (qa.layout() != BlockLayout::vec1x16() || qb.layout() != BlockLayout::vec1x16()) {
    throw DimensionError("qgemm: both operands must use 1x16 blocks along the contraction axis");
  }
  if (qa.cols() != qb.cols()) {
    throw DimensionError("qgemm: contraction dimensions differ (" + std::to_string(qa.cols()) +
                         " vs " + std::to_string(qb.cols()) + ")");
  }
  const std::size_t m = qa.rows(), k = qb.rows(), n = qa.cols(), nb = n / 16;
  const std::vector<double> a = decoded_elements(qa), b = decoded_elements(qb);
  const std::vector<double> sa = decoded_block_scales(qa), sb = decoded_block_scales(qb);
  const double global = qa.scales().s_dec * qb.scales().s_dec;

  std::vector<double> out(m * k);
  const auto mrows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < mrows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = a.data() + i * n;
    for (std::size_t j = 0; j < k; ++j) {
      const double* brow = b.data() + j * n;
      double acc = 0.0;
      for (std::size_t blk = 0; blk < nb; ++blk) {
        double partial = 0.0;
        for (std::size_t t = blk * 16; t < blk * 16 + 16; ++t) partial += arow[t] * brow[t];
        acc += partial * (sa[i * nb + blk] * sb[j * nb + blk]);
      }
      out[i * k + j] = acc * global;
    }
  }
  return Tensor::matrix(m, k, std::move(out));
}

}  // namespace nvfp4lab::micro
