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
#include <cstring>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "nvfp4lab/error.hpp"
#include "nvfp4lab/microscale.hpp"
#include "nvfp4lab/tensor_io.hpp"
#include "test_support.hpp"

using namespace nvfp4lab;
using namespace nvfp4lab::io;

namespace {

// Values that survive the trip through binary32.
Tensor float_exact(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  const Tensor g = testing::gaussian(rows, cols, seed);
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(g[i]);
  return Tensor::matrix(rows, cols, v);
}

std::uint64_t parse_offset(std::span<const std::uint8_t> bytes, bool nvq) {
  try {
    if (nvq) decode_nvq1(bytes);
    else decode_nvt1(bytes);
  } catch (const ParseError& e) {
    return e.offset();
  }
  FAIL("expected a parse error");
  return 0;
}

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("NVT1 layout") {
  const Tensor t = Tensor::matrix({{1.5, -2}, {0.25, 8}, {0, 3}});
  const auto b = encode_nvt1(t);
  REQUIRE(b.size() == 12 + 2 * 8 + 6 * 4);
  CHECK(std::memcmp(b.data(), "NVT1", 4) == 0);
  CHECK(b[4] == 1);
  CHECK(b[5] == 0);
  CHECK(b[6] == 0);
  CHECK(b[7] == 0);
  CHECK(b[8] == 2);
  CHECK(b[12] == 3);
  CHECK(b[20] == 2);
  float first;
  std::memcpy(&first, b.data() + 28, 4);
  CHECK(first == 1.5f);
  CHECK(decode_nvt1(b) == t);
}

TEST_CASE("NVT1 round trip") {
  const Tensor t = float_exact(7, 5, 1);
  CHECK(testing::bit_identical(decode_nvt1(encode_nvt1(t)), t));
  const Tensor r3(Shape{2, 3, 4}, std::vector<double>(24, 0.5));
  CHECK(decode_nvt1(encode_nvt1(r3)) == r3);
  // Narrowing to binary32 is the only loss.
  const Tensor g = testing::gaussian(4, 4, 2);
  CHECK(max_relative_error(decode_nvt1(encode_nvt1(g)), g) < 1e-7);
  CHECK_THROWS_AS(encode_nvt1(Tensor::vector({1e300})), CodecError);
}

TEST_CASE("NVT1 malformed input reports the offset") {
  const auto good = encode_nvt1(float_exact(2, 3, 3));
  auto b = good;
  b[0] = 'X';
  CHECK(parse_offset(b, false) == 0);
  b = good;
  b[4] = 2;
  CHECK(parse_offset(b, false) == 4);
  b = good;
  b[5] = 1;
  CHECK(parse_offset(b, false) == 5);
  b = good;
  b[7] = 1;
  CHECK(parse_offset(b, false) == 6);
  b = good;
  b[8] = 0;
  CHECK(parse_offset(b, false) == 8);
  b = good;
  std::memset(b.data() + 20, 0, 8);
  CHECK(parse_offset(b, false) == 20);

  b = good;
  b.resize(b.size() - 3);
  CHECK(parse_offset(b, false) == b.size());
  b.resize(6);
  CHECK(parse_offset(b, false) == 6);
  b = good;
  b.push_back(0);
  CHECK(parse_offset(b, false) == good.size());

  b = good;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(b.data() + 28 + 4, &nan, 4);
  CHECK(parse_offset(b, false) == 32);
  CHECK(parse_offset(std::vector<std::uint8_t>{}, false) == 0);
}

TEST_CASE("NVQ1 round trip") {
  for (auto layout : {micro::BlockLayout::vec1x16(), micro::BlockLayout::tile16x16()}) {
    const auto q = micro::quantize_tensor(testing::laplace(32, 48, 4), layout);
    const auto b = encode_nvq1(q);
    CHECK(b[5] == static_cast<std::uint8_t>(layout.kind));
    const auto back = decode_nvq1(b);
    CHECK(back.shape() == q.shape());
    CHECK(back.layout() == layout);
    CHECK(back.scales().block_scales == q.scales().block_scales);
    CHECK(std::equal(back.packed_codes().begin(), back.packed_codes().end(),
                     q.packed_codes().begin(), q.packed_codes().end()));
    CHECK(testing::bit_identical(micro::dequantize_tensor(back), micro::dequantize_tensor(q)));
    CHECK(encode_nvq1(back) == b);
  }
}

TEST_CASE("NVQ1 malformed input") {
  const auto q = micro::quantize_tensor(testing::gaussian(2, 32, 5), micro::BlockLayout::vec1x16());
  const auto good = encode_nvq1(q);
  const std::size_t header = 12 + 2 * 8;
  auto b = good;
  b[5] = 7;
  CHECK(parse_offset(b, true) == 5);
  b = good;
  b[5] = 1;  // 2 x 32 does not divide into 16x16 tiles
  CHECK(parse_offset(b, true) == header);
  b = good;
  const double neg = -1.0;
  std::memcpy(b.data() + header, &neg, 8);
  CHECK(parse_offset(b, true) == header);
  b = good;
  b[header + 8 + 2] = 0x7F;
  CHECK(parse_offset(b, true) == header + 8 + 2);
  b = good;
  b.pop_back();
  CHECK(parse_offset(b, true) == b.size());
  CHECK(parse_offset(encode_nvt1(Tensor::zeros({2, 32})), true) == 0);
}

TEST_CASE("files") {
  const auto p = temp_path("nvfp4lab_io_test.nvt");
  const Tensor t = float_exact(16, 16, 6);
  write_nvt1(p, t);
  CHECK(read_nvt1(p) == t);
  std::filesystem::remove(p);
  CHECK_THROWS_AS(read_nvt1(p), IoError);
  CHECK_THROWS_AS(write_nvt1(temp_path("no_such_dir_nvfp4lab/x.nvt"), t), IoError);
}
