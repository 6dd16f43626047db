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

// Times the OpenMP kernels against the serial reference versions and checks
// that they agree. Usage: bench_kernels [size] [repeats]

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>

#include "nvfp4lab/dense.hpp"
#include "nvfp4lab/microscale.hpp"
#include "nvfp4lab/reference.hpp"
#include "nvfp4lab/rht.hpp"

using namespace nvfp4lab;

namespace {

// Best of `repeats` wall-clock runs, in milliseconds.
double best_ms(int repeats, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

bool same_quantized(const micro::QuantizedTensor& a, const micro::QuantizedTensor& b) {
  return a.scales().block_scales == b.scales().block_scales &&
         std::ranges::equal(a.packed_codes(), b.packed_codes()) &&
         same_bits(micro::dequantize_tensor(a), micro::dequantize_tensor(b));
}

void row(const char* kernel, double omp_ms, double ref_ms, const std::string& check) {
  std::printf("%-10s %12.3f %12.3f %9.2fx  %s\n", kernel, omp_ms, ref_ms, ref_ms / omp_ms,
              check.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 256;
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 3;
  if (n == 0 || n % 16 != 0 || repeats < 1) {
    std::fprintf(stderr, "usage: bench_kernels [size, multiple of 16] [repeats]\n");
    return 2;
  }

  const Tensor a = sample_prior({Distribution::Gaussian, 1.0, 1}, {n, n});
  const Tensor b = sample_prior({Distribution::Laplace, 1.0, 2}, {n, n});
  const auto layout = micro::BlockLayout::vec1x16();
  const auto sr = codec::RoundingMode::sr(3);

  std::printf("size %zu, %d OpenMP threads, best of %d\n", n, omp_get_max_threads(), repeats);
  std::printf("%-10s %12s %12s %10s  %s\n", "kernel", "openmp_ms", "serial_ms", "speedup", "check");
  bool ok = true;

  Tensor c, c_ref;
  const double g = best_ms(repeats, [&] { c = gemm(a, b); });
  const double g_ref = best_ms(repeats, [&] { c_ref = reference::gemm(a, b); });
  ok &= same_bits(c, c_ref);
  row("gemm", g, g_ref, same_bits(c, c_ref) ? "bit-identical" : "MISMATCH");

  micro::QuantizedTensor qa = micro::quantize_tensor(a, layout, sr);
  micro::QuantizedTensor qa_ref = qa;
  const double q = best_ms(repeats, [&] { qa = micro::quantize_tensor(a, layout, sr); });
  const double q_ref = best_ms(repeats, [&] { qa_ref = reference::quantize_tensor(a, layout, sr); });
  ok &= same_quantized(qa, qa_ref);
  row("quantize", q, q_ref, same_quantized(qa, qa_ref) ? "bit-identical" : "MISMATCH");

  const auto qb = micro::quantize_tensor(b, layout);
  const double m = best_ms(repeats, [&] { c = micro::qgemm(qa, qb); });
  const double m_ref = best_ms(repeats, [&] { c_ref = reference::qgemm(qa, qb); });
  ok &= same_bits(c, c_ref);
  row("qgemm", m, m_ref, same_bits(c, c_ref) ? "bit-identical" : "MISMATCH");

  // The butterfly and the direct sum add in different orders.
  const double w = best_ms(repeats, [&] { c = rht::walsh_hadamard(a); });
  const double w_ref = best_ms(repeats, [&] { c_ref = reference::walsh_hadamard(a); });
  const double err = max_relative_error(c, c_ref);
  ok &= err <= 1e-13;
  char buf[64];
  std::snprintf(buf, sizeof buf, "max rel err %.2e", err);
  row("wht", w, w_ref, buf);

  return ok ? 0 : 1;
}
