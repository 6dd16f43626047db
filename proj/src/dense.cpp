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

#include "nvfp4lab/dense.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nvfp4lab/error.hpp"
#include "nvfp4lab/rng.hpp"

namespace nvfp4lab {

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " must be a matrix, got " + shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

// c (m x k, pre-initialised) += a (m x n) * b (n x k). Row-parallel; each
// c[i][j] accumulates its n terms in increasing t.
void gemm_kernel(std::vector<double>& c, const Tensor& a, const Tensor& b) {
  const auto m = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t n = a.cols();
  const std::size_t k = b.cols();
  const double* A = a.values().data();
  const double* B = b.values().data();
  double* C = c.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    double* crow = C + static_cast<std::size_t>(i) * k;
    const double* arow = A + static_cast<std::size_t>(i) * n;
    for (std::size_t t = 0; t < n; ++t) {
      const double av = arow[t];
      const double* brow = B + t * k;
      for (std::size_t j = 0; j < k; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename Op>
Tensor elementwise(const Tensor& a, const Tensor& b, const char* what, Op op) {
  require_same_shape(a, b, what);
  std::vector<double> out(a.size());
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(x[i], y[i]);
  return Tensor(a.shape(), std::move(out));
}

}  // namespace

Tensor gemm(const Tensor& a, const Tensor& b) {
  require_matrix(a, "gemm lhs");
  require_matrix(b, "gemm rhs");
  if (a.cols() != b.rows()) {
    throw DimensionError("gemm: inner dimensions differ " + shape_to_string(a.shape()) + " * " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> c(a.rows() * b.cols(), 0.0);
  gemm_kernel(c, a, b);
  return Tensor::matrix(a.rows(), b.cols(), std::move(c));
}

Tensor gemm_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "gemm_nt lhs");
  require_matrix(b, "gemm_nt rhs");
  if (a.cols() != b.cols()) {
    throw DimensionError("gemm_nt: contraction dimensions differ " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
  return gemm(a, transpose(b));
}

Tensor gemm_nt_accumulate(const Tensor& acc, const Tensor& a, const Tensor& b) {
  require_matrix(a, "gemm_nt_accumulate lhs");
  require_matrix(b, "gemm_nt_accumulate rhs");
  if (a.cols() != b.cols() || acc.rank() != 2 || acc.rows() != a.rows() ||
      acc.cols() != b.rows()) {
    throw DimensionError("gemm_nt_accumulate: incompatible shapes");
  }
  std::vector<double> c(acc.values().begin(), acc.values().end());
  gemm_kernel(c, a, transpose(b));
  return Tensor::matrix(acc.rows(), acc.cols(), std::move(c));
}

Tensor transpose(const Tensor& t) {
  require_matrix(t, "transpose");
  const std::size_t r = t.rows(), c = t.cols();
  std::vector<double> out(t.size());
  const auto v = t.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return Tensor::matrix(c, r, std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, "subtract", [](double x, double y) { return x - y; });
}

Tensor hadamard_product(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, "hadamard_product", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& t, double alpha) {
  std::vector<double> out(t.values().begin(), t.values().end());
  for (double& v : out) v *= alpha;
  return Tensor(t.shape(), std::move(out));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_cols part");
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (const Tensor& p : parts) {
      const auto row = p.row(r);
      out.insert(out.end(), row.begin(), row.end());
    }
  return Tensor::matrix(rows, cols, std::move(out));
}

Tensor gather_cols(const Tensor& t, std::span<const std::size_t> cols) {
  require_matrix(t, "gather_cols");
  if (cols.empty()) throw DimensionError("gather_cols: empty column list");
  for (std::size_t c : cols)
    if (c >= t.cols()) throw DimensionError("gather_cols: column " + std::to_string(c) + " out of range");
  std::vector<double> out;
  out.reserve(t.rows() * cols.size());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c : cols) out.push_back(t.at(r, c));
  return Tensor::matrix(t.rows(), cols.size(), std::move(out));
}

Tensor pad_to(const Tensor& t, std::size_t rows, std::size_t cols) {
  if (rows < t.rows() || cols < t.cols()) throw DimensionError("pad_to: target smaller than tensor");
  if (rows == t.rows() && cols == t.cols() && t.rank() == 2) return t;
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t r = 0; r < t.rows(); ++r)
    std::copy_n(t.row(r).begin(), t.cols(), out.begin() + static_cast<std::ptrdiff_t>(r * cols));
  return Tensor::matrix(rows, cols, std::move(out));
}

Tensor crop_to(const Tensor& t, std::size_t rows, std::size_t cols) {
  if (rows > t.rows() || cols > t.cols() || rows == 0 || cols == 0)
    throw DimensionError("crop_to: invalid target");
  std::vector<double> out;
  out.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = t.row(r);
    out.insert(out.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(cols));
  }
  return Tensor::matrix(rows, cols, std::move(out));
}

double frobenius_energy(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return s;
}

double max_relative_error(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_relative_error");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return den > 0.0 ? num / den : num;
}

double relative_frobenius_error(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "relative_frobenius_error");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    num += d * d;
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

std::string_view to_string(Distribution d) {
  return d == Distribution::Gaussian ? "gaussian" : "laplace";
}

Distribution parse_distribution(std::string_view name) {
  if (name == "gaussian") return Distribution::Gaussian;
  if (name == "laplace") return Distribution::Laplace;
  throw ConfigError("unknown prior '" + std::string(name) + "' (expected gaussian or laplace)");
}

Tensor sample_prior(const PriorSpec& spec, Shape shape) {
  if (!(spec.scale > 0.0) || !std::isfinite(spec.scale)) throw ConfigError("prior scale must be positive");
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> out(n);
  const CounterRng rng(spec.seed, static_cast<std::uint64_t>(spec.distribution));
  const auto count = static_cast<std::ptrdiff_t>(n);
  if (spec.distribution == Distribution::Gaussian) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const auto c = static_cast<std::uint64_t>(i);
      const double u1 = rng.uniform_open(2 * c);
      const double u2 = rng.uniform(2 * c + 1);
      out[static_cast<std::size_t>(i)] =
          spec.scale * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const double u = rng.uniform_open(static_cast<std::uint64_t>(i)) - 0.5;
      const double mag = -spec.scale * std::log1p(-2.0 * std::abs(u));
      out[static_cast<std::size_t>(i)] = u < 0.0 ? -mag : mag;
    }
  }
  return Tensor(std::move(shape), std::move(out));
}

}  // namespace nvfp4lab
