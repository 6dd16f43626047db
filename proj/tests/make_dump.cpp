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

// Writes NVT1 fixtures for the CLI smoke test.
//
//   make_dump <path> <rows> <cols> [zeros|random|truncated]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "nvfp4lab/dense.hpp"
#include "nvfp4lab/tensor_io.hpp"

int main(int argc, char** argv) {
  using namespace nvfp4lab;
  if (argc < 4) {
    std::fprintf(stderr, "usage: make_dump <path> <rows> <cols> [zeros|random|truncated]\n");
    return 2;
  }
  const std::size_t rows = std::strtoull(argv[2], nullptr, 10);
  const std::size_t cols = std::strtoull(argv[3], nullptr, 10);
  const std::string kind = argc > 4 ? argv[4] : "random";
  const Tensor t = kind == "zeros" ? Tensor::zeros({rows, cols})
                                   : sample_prior({Distribution::Laplace, 1.0, 17}, {rows, cols});
  auto bytes = io::encode_nvt1(t);
  if (kind == "truncated") bytes.resize(bytes.size() - 3);
  io::write_file(argv[1], bytes);
  return 0;
}
