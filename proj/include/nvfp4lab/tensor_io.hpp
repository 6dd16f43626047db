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

#include <filesystem>
#include <span>
#include <vector>

#include "nvfp4lab/microscale.hpp"
#include "nvfp4lab/tensor.hpp"

// Binary dumps.
//
// NVT1 (dense tensor), little-endian:
//   0..3   magic "NVT1"
//   4      version = 1
//   5      dtype tag, 0 = IEEE-754 binary32
//   6..7   reserved, zero
//   8..11  rank (u32)
//   then   rank x u64 dims, then the row-major payload
//
// NVQ1 (quantized tensor):
//   0..3   magic "NVQ1"
//   4      version = 1
//   5      layout tag, 0 = 1x16, 1 = 16x16
//   6..7   reserved, zero
//   8..11  rank (u32), then rank x u64 dims
//   then   s_dec as binary64, one byte per block scale, packed E2M1 codes
//          (two per byte, low nibble = even index)
//
// Readers throw ParseError with the byte offset where parsing stopped.
namespace nvfp4lab::io {

std::vector<std::uint8_t> encode_nvt1(const Tensor& t);
Tensor decode_nvt1(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_nvq1(const micro::QuantizedTensor& q);
micro::QuantizedTensor decode_nvq1(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Tensor read_nvt1(const std::filesystem::path& path);
void write_nvt1(const std::filesystem::path& path, const Tensor& t);

}  // namespace nvfp4lab::io
