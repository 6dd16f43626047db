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

#include "nvfp4lab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "nvfp4lab/dense.hpp"
#include "nvfp4lab/error.hpp"
#include "nvfp4lab/microscale.hpp"

namespace nvfp4lab::diag {

std::optional<double> excess_kurtosis(std::span<const double> values) {
  if (values.size() < 4) throw DimensionError("excess_kurtosis: need at least 4 values");
  const double n = static_cast<double>(values.size());
  double mu = 0.0;
  for (double v : values) mu += v;
  mu /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d2 = (v - mu) * (v - mu);
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  // Relative threshold: a constant input leaves only rounding noise in m2.
  if (!(m2 > 1e-28 * std::max(1.0, mu * mu))) return std::nullopt;
  return m4 / (m2 * m2) - 3.0;
}

BlockKurtosis block_kurtosis(const Tensor& t, std::size_t tile) {
  const std::size_t rows = t.rows(), cols = t.cols();
  if (tile == 0 || rows % tile != 0 || cols % tile != 0) {
    throw DimensionError("block_kurtosis: " + shape_to_string(t.shape()) +
                         " is not divisible into " + std::to_string(tile) + "x" +
                         std::to_string(tile) + " tiles");
  }
  const std::size_t tr = rows / tile, tc = cols / tile;
  std::vector<std::optional<double>> per(tr * tc);
  const auto ntiles = static_cast<std::ptrdiff_t>(per.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < ntiles; ++b) {
    const std::size_t bi = static_cast<std::size_t>(b) / tc, bj = static_cast<std::size_t>(b) % tc;
    std::vector<double> v;
    v.reserve(tile * tile);
    for (std::size_t r = bi * tile; r < (bi + 1) * tile; ++r)
      for (std::size_t c = bj * tile; c < (bj + 1) * tile; ++c) v.push_back(t.at(r, c));
    per[static_cast<std::size_t>(b)] = excess_kurtosis(v);
  }
  BlockKurtosis out;
  out.tiles = per.size();
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& k : per) {
    if (!k) {
      ++out.excluded;
      continue;
    }
    out.min = out.min ? std::min(*out.min, *k) : *k;
    out.max = out.max ? std::max(*out.max, *k) : *k;
    sum += *k;
    ++used;
  }
  if (used > 0) {
    // Clamp: the mean of finitely many doubles can land one ulp outside.
    out.avg = std::clamp(sum / static_cast<double>(used), *out.min, *out.max);
  }
  return out;
}

TopKRecord topk_magnitudes(const Tensor& t, std::size_t k) {
  if (k > t.size()) {
    throw DimensionError("topk_magnitudes: k = " + std::to_string(k) + " exceeds " +
                         std::to_string(t.size()) + " elements");
  }
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto v = t.values();
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double x = std::abs(v[a]), y = std::abs(v[b]);
                      return x > y || (x == y && a < b);
                    });
  TopKRecord rec;
  rec.k = k;
  for (std::size_t i = 0; i < k; ++i) {
    rec.values.push_back(std::abs(v[order[i]]));
    rec.indices.push_back(order[i]);
    rec.channel_ids.push_back(order[i] % t.cols());
  }
  return rec;
}

Alignment swiglu_alignment(const Tensor& w_up, const Tensor& w_gate) {
  if (w_up.shape() != w_gate.shape()) {
    throw DimensionError("swiglu_alignment: shapes " + shape_to_string(w_up.shape()) + " and " +
                         shape_to_string(w_gate.shape()) + " differ");
  }
  Alignment out;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t r = 0; r < w_up.rows(); ++r) {
    const auto u = w_up.row(r), g = w_gate.row(r);
    double dot = 0.0, nu = 0.0, ng = 0.0;
    for (std::size_t c = 0; c < u.size(); ++c) {
      dot += u[c] * g[c];
      nu += u[c] * u[c];
      ng += g[c] * g[c];
    }
    if (nu == 0.0 || ng == 0.0) {
      ++out.excluded_rows;
      continue;
    }
    sum += std::abs(dot) / (std::sqrt(nu) * std::sqrt(ng));
    ++used;
  }
  if (used > 0) out.mean_abs_cosine = sum / static_cast<double>(used);
  return out;
}

SoftmaxHealth softmax_health(const Tensor& logits) {
  const std::size_t rows = logits.rows(), n = logits.cols();
  if (n < 4) throw DimensionError("softmax_health: rows need at least 4 logits");
  SoftmaxHealth out;
  double ent = 0.0, mx = 0.0, kurt = 0.0;
  std::size_t kurt_rows = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = logits.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0, ez = 0.0;
    for (double x : row) {
      const double e = std::exp(x - m);
      z += e;
      ez += e * (x - m);
    }
    // H = log Z - E[x - m] with Z = sum exp(x - m).
    ent += std::max(0.0, std::log(z) - ez / z);
    mx += m;
    if (const auto k = excess_kurtosis(row)) {
      kurt += *k;
      ++kurt_rows;
    } else {
      ++out.kurtosis_missing_rows;
    }
  }
  out.post_entropy = ent / static_cast<double>(rows);
  out.pre_max = mx / static_cast<double>(rows);
  if (kurt_rows > 0) out.pre_kurtosis = kurt / static_cast<double>(kurt_rows);
  return out;
}

Overlap weight_overlap(const Tensor& w) {
  if (w.rows() < 2) throw DimensionError("weight_overlap: need at least two rows");
  std::vector<std::vector<double>> unit;
  Overlap out;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    double nrm = 0.0;
    for (double x : row) nrm += x * x;
    if (nrm == 0.0) {
      ++out.excluded_rows;
      continue;
    }
    nrm = std::sqrt(nrm);
    std::vector<double> u(row.begin(), row.end());
    for (double& x : u) x /= nrm;
    unit.push_back(std::move(u));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < unit.size(); ++i)
    for (std::size_t j = i + 1; j < unit.size(); ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < unit[i].size(); ++c) dot += unit[i][c] * unit[j][c];
      s += 2.0 * dot * dot;
    }
  out.value = s;
  return out;
}

double sensitivity_score(double loss_quantized, double loss_baseline, std::uint64_t param_count,
                         double unit) {
  if (param_count == 0) throw ConfigError("sensitivity_score: param_count must be positive");
  if (!(unit > 0.0)) throw ConfigError("sensitivity_score: unit must be positive");
  return (loss_quantized - loss_baseline) / (static_cast<double>(param_count) / unit);
}

void DiagnosticsReport::add(std::string name, std::optional<double> value, std::string axis) {
  metrics_.push_back({std::move(name), std::move(axis), value});
}

const Metric* DiagnosticsReport::find(std::string_view name, std::string_view axis) const {
  for (const auto& m : metrics_)
    if (m.name == name && m.axis == axis) return &m;
  return nullptr;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void DiagnosticsReport::write_csv_header(std::ostream& os) {
  os << "step,source,metric,axis,value\n";
}

void DiagnosticsReport::write_csv_rows(std::ostream& os) const {
  for (const auto& m : metrics_) {
    os << step_ << ',' << source_ << ',' << m.name << ',' << m.axis << ',';
    if (m.value) os << format_double(*m.value);
    os << '\n';
  }
}

void add_tensor_metrics(DiagnosticsReport& report, const Tensor& t, std::size_t topk,
                        bool two_d_layout) {
  report.add("kurtosis", t.size() >= 4 ? excess_kurtosis(t.values()) : std::nullopt);
  const BlockKurtosis bk = block_kurtosis(t, 16);
  report.add("block_kurtosis_min", bk.min);
  report.add("block_kurtosis_avg", bk.avg);
  report.add("block_kurtosis_max", bk.max);
  report.add("block_kurtosis_excluded", static_cast<double>(bk.excluded));
  const TopKRecord rec = topk_magnitudes(t, std::min(topk, t.size()));
  for (std::size_t i = 0; i < rec.k; ++i) {
    const std::string axis = "rank" + std::to_string(i);
    report.add("topk_value", rec.values[i], axis);
    report.add("topk_index", static_cast<double>(rec.indices[i]), axis);
    report.add("topk_channel", static_cast<double>(rec.channel_ids[i]), axis);
  }
  const auto layout = two_d_layout ? micro::BlockLayout::tile16x16() : micro::BlockLayout::vec1x16();
  report.add("ftz", micro::ftz_ratio(t, layout), std::string(micro::to_string(layout)));
  report.add("frobenius_energy", frobenius_energy(t));
}

}  // namespace nvfp4lab::diag
