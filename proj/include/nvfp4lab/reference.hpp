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

#include "nvfp4lab/microscale.hpp"
#include "nvfp4lab/tensor.hpp"

// Serial reference kernels. These are the straightforward single-threaded
// versions of the OpenMP kernels; tests and the benchmark compare against
// them and expect bit-identical results.
namespace nvfp4lab::reference {

/// Triple loop, c[i][j] = sum_t a[i][t] * b[t][j].
Tensor gemm(const Tensor& a, const Tensor& b);

/// Serial two-level NVFP4 quantization, element by element.
micro::QuantizedTensor quantize_tensor(const Tensor& t, micro::BlockLayout layout,
                                       codec::RoundingMode mode);

/// Serial blockwise-descaled product, operands contraction-major.
Tensor qgemm(const micro::QuantizedTensor& qa, const micro::QuantizedTensor& qb);

/// Direct O(n^2) Walsh-Hadamard transform along rows (uses the Sylvester
/// sign rule H[i][j] = (-1)^popcount(i & j) / sqrt(n)).
Tensor walsh_hadamard(const Tensor& t);

}  // namespace nvfp4lab::reference
