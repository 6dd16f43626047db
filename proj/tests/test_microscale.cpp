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

#include <cmath>

#include "doctest.h"
#include "nvfp4lab/dense.hpp"
#include "nvfp4lab/error.hpp"
#include "nvfp4lab/microscale.hpp"
#include "nvfp4lab/reference.hpp"
#include "test_support.hpp"

using namespace nvfp4lab;
using micro::BlockLayout;

namespace {

Tensor block_row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::matrix(1, n, std::move(v));
}

}  // namespace

TEST_CASE("global scales") {
  const auto a = micro::compute_global_scales(Tensor::vector({2688.0, -1.0}));
  REQUIRE(a);
  CHECK(a->s_enc == 1.0);
  const auto b = micro::compute_global_scales(Tensor::vector({-6.0, 1.0}));
  REQUIRE(b);
  CHECK(b->s_enc == 448.0);
  CHECK(b->s_dec == 1.0 / 448.0);
  const auto c = micro::compute_global_scales(Tensor::vector({6.0 * 448.0}));
  CHECK(c->s_enc == 1.0);
  CHECK(c->s_dec == 1.0);
  CHECK_FALSE(micro::compute_global_scales(Tensor::zeros({4})));
  CHECK(micro::global_scales_or_unit(Tensor::zeros({4})).s_enc == 1.0);
}

TEST_CASE("block scales") {
  std::vector<double> v(16, 0.0);
  v[3] = 3.0;
  // s_enc = 1: stored code is e4m3(3/6) = 0.5.
  const auto s = micro::compute_block_scales(block_row(v), BlockLayout::vec1x16(), 1.0);
  CHECK(codec::decode_e4m3(s.block_scales[0]) == 0.5);

  v[3] = 6.0;
  const auto t = micro::compute_block_scales(block_row(v), BlockLayout::vec1x16(), 448.0);
  CHECK(codec::decode_e4m3(t.block_scales[0]) == 448.0);

  const auto z = micro::compute_block_scales(Tensor::zeros({1, 16}), BlockLayout::vec1x16(), 1.0);
  CHECK(z.block_scales[0] == codec::Fp8E4M3Code{0});
  CHECK(z.eff_enc[0] == 0.0);
}

TEST_CASE("scale set round-trip consistency") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Tensor t = testing::laplace(32, 64, seed, std::ldexp(1.0, int(seed) * 3 - 10));
    for (BlockLayout layout : {BlockLayout::vec1x16(), BlockLayout::tile16x16()}) {
      const auto g = micro::global_scales_or_unit(t);
      const auto s = micro::compute_block_scales(t, layout, g.s_enc);
      CHECK(std::abs(s.s_enc * s.s_dec - 1.0) <= 2.3e-16);
      for (std::size_t b = 0; b < s.eff_enc.size(); ++b) {
        const double stored = codec::decode_e4m3(s.block_scales[b]);
        if (stored == 0.0) continue;
        const double r = s.eff_enc[b] * s.s_dec * stored;
        CHECK(r >= 1.0 - std::ldexp(1.0, -6));
        CHECK(r <= 1.0 + std::ldexp(1.0, -6));
      }
    }
  }
}

TEST_CASE("layout must divide shape") {
  CHECK_THROWS_AS(micro::quantize_tensor(Tensor::zeros({2, 20}), BlockLayout::vec1x16()),
                  DimensionError);
  CHECK_THROWS_AS(micro::quantize_tensor(Tensor::zeros({8, 16}), BlockLayout::tile16x16()),
                  DimensionError);
  CHECK_NOTHROW(micro::quantize_tensor(Tensor::zeros({8, 16}), BlockLayout::vec1x16()));
}

TEST_CASE("zeros round-trip to zeros") {
  const auto q = micro::quantize_tensor(Tensor::zeros({16, 32}), BlockLayout::tile16x16());
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(q.code(i).bits == 0);
  for (auto c : q.scales().block_scales) CHECK(c.bits == 0);
  CHECK(micro::dequantize_tensor(q) == Tensor::zeros({16, 32}));
}

TEST_CASE("grid-aligned vector round-trips exactly") {
  const Tensor t = block_row({6, 3, 1.5, -1, 0.5, -4, 2, 0, -6, 3, -1.5, 1, -0.5, 4, -2, 0});
  const auto q = micro::quantize_tensor(t, BlockLayout::vec1x16());
  CHECK(q.scales().s_enc == 448.0);
  CHECK(testing::bit_identical(micro::dequantize_tensor(q), t));
  CHECK(testing::bit_identical(micro::dequantize_tensor(q), micro::dequantize_tensor(q)));
}

TEST_CASE("gaussian round-trip error") {
  const Tensor t = testing::gaussian(32, 32, 2024);
  const Tensor back = micro::fake_quantize(t, BlockLayout::vec1x16());
  CHECK(relative_frobenius_error(back, t) < 0.20);
  CHECK(relative_frobenius_error(micro::fake_quantize(t, BlockLayout::tile16x16()), t) < 0.20);
}

TEST_CASE("dequantized magnitudes respect the block bound") {
  const Tensor t = testing::laplace(32, 32, 5);
  for (BlockLayout layout : {BlockLayout::vec1x16(), BlockLayout::tile16x16()}) {
    const auto q = micro::quantize_tensor(t, layout);
    const Tensor d = micro::dequantize_tensor(q);
    for (std::size_t r = 0; r < 32; ++r)
      for (std::size_t c = 0; c < 32; ++c)
        CHECK(std::abs(d.at(r, c)) <= q.block_decode_scale(layout.block_of(r, c, 32)) * 6.0);
  }
}

TEST_CASE("codes are invariant under scaling by two") {
  const Tensor t = testing::gaussian(16, 64, 9);
  for (BlockLayout layout : {BlockLayout::vec1x16(), BlockLayout::tile16x16()}) {
    const auto q1 = micro::quantize_tensor(t, layout);
    const auto q2 = micro::quantize_tensor(scale(t, 2.0), layout);
    CHECK(std::equal(q1.packed_codes().begin(), q1.packed_codes().end(),
                     q2.packed_codes().begin(), q2.packed_codes().end()));
    CHECK(testing::bit_identical(micro::dequantize_tensor(q2),
                                 scale(micro::dequantize_tensor(q1), 2.0)));
  }
}

TEST_CASE("block maximum maps to code 6 when the scale is exact") {
  // Blocks of amax 6 * 2^j under s_enc = 448 store the power-of-two scale exactly.
  std::vector<double> v(64);
  for (std::size_t i = 0; i < 64; ++i) v[i] = 0.1 * double(i % 16) / double(1u << (i / 16));
  for (std::size_t b = 0; b < 4; ++b) v[b * 16 + 7] = -6.0 / double(1u << b);
  const auto q = micro::quantize_tensor(block_row(v), BlockLayout::vec1x16());
  for (std::size_t b = 0; b < 4; ++b) CHECK(q.code(b * 16 + 7).bits == 0xF);
}

TEST_CASE("RTN quantization is idempotent") {
  const Tensor t = testing::gaussian(32, 32, 31);
  for (BlockLayout layout : {BlockLayout::vec1x16(), BlockLayout::tile16x16()}) {
    const auto q1 = micro::quantize_tensor(t, layout);
    const auto q2 = micro::quantize_tensor(micro::dequantize_tensor(q1), layout);
    CHECK(std::equal(q1.packed_codes().begin(), q1.packed_codes().end(),
                     q2.packed_codes().begin(), q2.packed_codes().end()));
    CHECK(testing::bit_identical(micro::dequantize_tensor(q1), micro::dequantize_tensor(q2)));
  }
}

TEST_CASE("FTZ ratio") {
  std::vector<double> v(16, 1.0);
  v[0] = 6.0;
  v[1] = 0.2;
  v[2] = 0.2;
  CHECK(micro::ftz_ratio(block_row(v), BlockLayout::vec1x16()) == 2.0 / 16.0);

  std::vector<double> eq(256);
  for (std::size_t i = 0; i < eq.size(); ++i) eq[i] = (i % 3 ? 2.5 : -2.5);
  CHECK(micro::ftz_ratio(Tensor::matrix(16, 16, eq), BlockLayout::tile16x16()) == 0.0);
  CHECK(micro::ftz_ratio(Tensor::zeros({16, 16}), BlockLayout::vec1x16()) == 1.0);

  const Tensor g = testing::laplace(32, 32, 3);
  for (double alpha : {std::ldexp(1.0, -20), 1.0, std::ldexp(1.0, 20), 0.37, 1234.5}) {
    CHECK(micro::ftz_ratio(scale(g, alpha), BlockLayout::vec1x16()) ==
          micro::ftz_ratio(g, BlockLayout::vec1x16()));
  }
}

TEST_CASE("SR quantization uses bracketing codes and ceil scales") {
  const Tensor t = testing::gaussian(4, 32, 8);
  const auto q = micro::quantize_tensor(t, BlockLayout::vec1x16(), codec::RoundingMode::sr(1));
  const auto rtn = micro::compute_block_scales(t, BlockLayout::vec1x16(),
                                               micro::global_scales_or_unit(t).s_enc,
                                               micro::ScaleRounding::Up);
  CHECK(q.scales().block_scales == rtn.block_scales);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double scaled = t[i] * q.scales().eff_enc[i / 16];
    // Ceil-rounded scales keep scaled values within 6 up to the rounding of eff_enc.
    CHECK(std::abs(scaled) <= 6.0 * (1.0 + 1e-12));
    double lo = -6.0, hi = 6.0;
    for (const auto& [c, val] : testing::e2m1_brute_table()) {
      if (val <= scaled) lo = std::max(lo, val);
      if (val >= scaled) hi = std::min(hi, val);
    }
    const double v = codec::decode_e2m1(q.code(i));
    CHECK((v == lo || v == hi));
  }
}

TEST_CASE("parallel quantization matches the serial reference") {
  for (auto mode : {codec::RoundingMode::rtn(), codec::RoundingMode::sr(77)}) {
    const Tensor t = testing::laplace(48, 64, 12);
    for (BlockLayout layout : {BlockLayout::vec1x16(), BlockLayout::tile16x16()}) {
      const auto a = micro::quantize_tensor(t, layout, mode);
      const auto b = reference::quantize_tensor(t, layout, mode);
      CHECK(std::equal(a.packed_codes().begin(), a.packed_codes().end(),
                       b.packed_codes().begin(), b.packed_codes().end()));
      CHECK(a.scales().block_scales == b.scales().block_scales);
    }
  }
}

TEST_CASE("qgemm") {
  const Tensor six = scale(Tensor::identity(16), 6.0);
  const auto q6 = micro::quantize_tensor(six, BlockLayout::vec1x16());
  CHECK(micro::qgemm(q6, q6) == scale(Tensor::identity(16), 36.0));

  const Tensor a = testing::gaussian(64, 64, 1), b = testing::gaussian(64, 64, 2);
  const auto qa = micro::quantize_tensor(a, BlockLayout::vec1x16());
  const auto qb = micro::quantize_tensor(b, BlockLayout::vec1x16());
  const Tensor c = micro::qgemm(qa, qb);
  const Tensor via_deq = testing::naive_gemm(micro::dequantize_tensor(qa),
                                             transpose(micro::dequantize_tensor(qb)));
  CHECK(max_relative_error(c, via_deq) <= 1e-12);
  CHECK(relative_frobenius_error(c, gemm_nt(a, b)) < 0.35);
  CHECK(testing::bit_identical(c, reference::qgemm(qa, qb)));

  CHECK_THROWS_AS(micro::qgemm(qa, micro::quantize_tensor(Tensor::zeros({4, 32}),
                                                          BlockLayout::vec1x16())),
                  DimensionError);
  CHECK_THROWS_AS(micro::qgemm(micro::quantize_tensor(a, BlockLayout::tile16x16()), qb),
                  DimensionError);
}
