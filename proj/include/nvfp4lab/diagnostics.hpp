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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nvfp4lab/tensor.hpp"

// Outlier and stability indicators. Kurtosis uses population moments,
// kappa = E[(x - mu)^4] / sigma^4 - 3. Zero-variance inputs give nullopt
// ("missing"), never 0 or infinity.
namespace nvfp4lab::diag {

std::optional<double> excess_kurtosis(std::span<const double> values);

struct BlockKurtosis {
  std::optional<double> min, avg, max;  ///< missing when no tile has variance
  std::size_t tiles = 0;
  std::size_t excluded = 0;  ///< zero-variance tiles
};

/// Kurtosis of every tile x tile block (dims must divide), aggregated.
BlockKurtosis block_kurtosis(const Tensor& t, std::size_t tile = 16);

struct TopKRecord {
  std::size_t k = 0;
  std::vector<double> values;             ///< |x|, descending
  std::vector<std::size_t> indices;       ///< flat row-major indices
  std::vector<std::size_t> channel_ids;   ///< column of each index
};

/// k largest magnitudes; equal magnitudes keep the lower index first.
TopKRecord topk_magnitudes(const Tensor& t, std::size_t k);

struct Alignment {
  std::optional<double> mean_abs_cosine;
  std::size_t excluded_rows = 0;
};

/// Mean over rows of |<up_i, gate_i>| / (|up_i| |gate_i|). Rows where either
/// side is zero are excluded and counted.
Alignment swiglu_alignment(const Tensor& w_up, const Tensor& w_gate);

struct SoftmaxHealth {
  double post_entropy = 0.0;            ///< mean entropy of softmax(row), nats
  std::optional<double> pre_kurtosis;   ///< mean over rows with variance
  double pre_max = 0.0;                 ///< mean of the row maxima
  std::size_t kurtosis_missing_rows = 0;
};

/// Each row of logits is one softmax distribution (at least 4 entries).
SoftmaxHealth softmax_health(const Tensor& logits);

struct Overlap {
  double value = 0.0;
  std::size_t excluded_rows = 0;
};

/// Sum of squared off-diagonal entries of the Gram matrix of the
/// unit-normalized nonzero rows.
Overlap weight_overlap(const Tensor& w);

/// (loss_quantized - loss_baseline) / (param_count / unit).
double sensitivity_score(double loss_quantized, double loss_baseline, std::uint64_t param_count,
                         double unit = 1e6);

struct Metric {
  std::string name;
  std::string axis;  ///< empty for scalars, element label otherwise
  std::optional<double> value;
};

/// Collection of named metrics for one (step, source).
class DiagnosticsReport {
 public:
  DiagnosticsReport(std::string source, std::int64_t step) : source_(std::move(source)), step_(step) {}

  void add(std::string name, std::optional<double> value, std::string axis = {});

  const std::string& source() const noexcept { return source_; }
  std::int64_t step() const noexcept { return step_; }
  const std::vector<Metric>& metrics() const noexcept { return metrics_; }
  /// First metric with this name and axis, if any.
  const Metric* find(std::string_view name, std::string_view axis = {}) const;

  static void write_csv_header(std::ostream& os);
  /// Rows `step,source,metric,axis,value`; missing values are empty fields.
  void write_csv_rows(std::ostream& os) const;

 private:
  std::string source_;
  std::int64_t step_;
  std::vector<Metric> metrics_;
};

/// Adds kurtosis, block kurtosis (16x16 tiles, when dims divide), top-k,
/// FTZ for the given layout kind, and Frobenius energy of t.
void add_tensor_metrics(DiagnosticsReport& report, const Tensor& t, std::size_t topk,
                        bool two_d_layout);

/// %.17g rendering used in every CSV.
std::string format_double(double v);

}  // namespace nvfp4lab::diag
