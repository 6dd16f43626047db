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

#include "nvfp4lab/hcp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nvfp4lab/dense.hpp"
#include "nvfp4lab/error.hpp"
#include "nvfp4lab/rng.hpp"

namespace nvfp4lab::hcp {

using micro::BlockLayout;

void HcpConfig::validate(std::size_t channels) const {
  if (order == Order::O2 && target != Target::B) {
    throw ConfigError("hcp: second-order compensation requires target B (" + name() + ")");
  }
  if (order == Order::O1 && target == Target::B) {
    throw ConfigError("hcp: first-order compensation needs target W or A (" + name() + ")");
  }
  if (k > channels) {
    throw DimensionError("hcp: k = " + std::to_string(k) + " exceeds " +
                         std::to_string(channels) + " channels");
  }
}

std::string HcpConfig::name() const {
  std::string s = mode == Mode::Single ? "S-" : "D-";
  s += order == Order::O1 ? "O1-" : "O2-";
  s += target == Target::W ? "W" : target == Target::A ? "A" : "B";
  return s;
}

HcpConfig HcpConfig::parse(std::string_view text) {
  HcpConfig c;
  if (text.size() != 6 || text[1] != '-' || text[4] != '-' || text[2] != 'O') {
    throw ConfigError("hcp: cannot parse config '" + std::string(text) + "'");
  }
  switch (text[0]) {
    case 'S': c.mode = Mode::Single; break;
    case 'D': c.mode = Mode::Dual; break;
    default: throw ConfigError("hcp: bad mode in '" + std::string(text) + "'");
  }
  switch (text[3]) {
    case '1': c.order = Order::O1; break;
    case '2': c.order = Order::O2; break;
    default: throw ConfigError("hcp: bad order in '" + std::string(text) + "'");
  }
  switch (text[5]) {
    case 'W': c.target = Target::W; break;
    case 'A': c.target = Target::A; break;
    case 'B': c.target = Target::B; break;
    default: throw ConfigError("hcp: bad target in '" + std::string(text) + "'");
  }
  c.validate(c.k);
  return c;
}

std::vector<HcpConfig> all_configs() {
  std::vector<HcpConfig> out;
  for (Mode m : {Mode::Single, Mode::Dual}) {
    out.push_back({m, Order::O1, Target::W});
    out.push_back({m, Order::O1, Target::A});
    out.push_back({m, Order::O2, Target::B});
  }
  return out;
}

std::size_t default_patch_count(std::size_t channels) {
  // Integer form of ceil(0.0909 * n); avoids 0.0909 * n landing a hair above
  // an integer.
  return (channels * 909 + 9999) / 10000;
}

Tensor residuals(const Tensor& t, const micro::QuantizedTensor& q) {
  if (t.shape() != q.shape()) {
    throw DimensionError("residuals: tensor " + shape_to_string(t.shape()) +
                         " vs quantized " + shape_to_string(q.shape()));
  }
  return subtract(t, micro::dequantize_tensor(q));
}

std::vector<double> channel_scores(const Tensor& dx, const Tensor& dw, ScoreNorm norm) {
  if (dx.rank() != 2 || dw.rank() != 2 || dx.cols() != dw.cols()) {
    throw DimensionError("channel_scores: residuals must share the channel (column) dimension");
  }
  const std::size_t n = dx.cols();
  std::vector<double> sx(n, 0.0), sw(n, 0.0);
  for (std::size_t r = 0; r < dx.rows(); ++r) {
    const auto row = dx.row(r);
    for (std::size_t j = 0; j < n; ++j) sx[j] += std::abs(row[j]);
  }
  for (std::size_t r = 0; r < dw.rows(); ++r) {
    const auto row = dw.row(r);
    for (std::size_t j = 0; j < n; ++j) sw[j] += std::abs(row[j]);
  }
  const double fx = norm == ScoreNorm::PerElement ? 1.0 / double(dx.rows()) : 1.0;
  const double fw = norm == ScoreNorm::PerElement ? 1.0 / double(dw.rows()) : 1.0;
  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) s[j] = fx * sx[j] + fw * sw[j];
  return s;
}

ChannelSet select_hot_channels(std::span<const double> scores, std::size_t k, std::int64_t step) {
  if (k > scores.size()) {
    throw DimensionError("select_hot_channels: k = " + std::to_string(k) + " exceeds " +
                         std::to_string(scores.size()) + " scores");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  ChannelSet set;
  set.step_created = step;
  set.scores.reserve(k);
  for (std::size_t i : order) set.scores.push_back(scores[i]);
  set.indices = std::move(order);
  return set;
}

namespace {

Tensor low_precision_product(const micro::QuantizedTensor& qw, const micro::QuantizedTensor& qx,
                             const Tensor& w_hat, const Tensor& x_hat) {
  if (qw.layout() == BlockLayout::vec1x16() && qx.layout() == BlockLayout::vec1x16()) {
    return micro::qgemm(qw, qx);
  }
  return gemm_nt(w_hat, x_hat);
}

void check_set(const ChannelSet& set, std::size_t channels) {
  for (std::size_t i = 0; i < set.indices.size(); ++i) {
    if (set.indices[i] >= channels) {
      throw DimensionError("hcp: channel index " + std::to_string(set.indices[i]) +
                           " out of range for " + std::to_string(channels) + " channels");
    }
    if (i > 0 && set.indices[i] <= set.indices[i - 1]) {
      throw DimensionError("hcp: channel indices must be strictly increasing");
    }
  }
}

Tensor quantize_segment(const Tensor& seg, std::uint64_t seed_tag, codec::RoundingMode mode) {
  const std::size_t cols = seg.cols();
  const std::size_t padded = (cols + 15) / 16 * 16;
  if (mode.stochastic()) mode.seed = derive_seed(mode.seed, seed_tag);
  const Tensor q = micro::fake_quantize(pad_to(seg, seg.rows(), padded),
                                        BlockLayout::vec1x16(), mode);
  return crop_to(q, seg.rows(), cols);
}

PreparedProduct assemble(const Tensor& w, const Tensor& x, micro::QuantizedTensor qw,
                         micro::QuantizedTensor qx, codec::RoundingMode mode) {
  if (w.rank() != 2 || x.rank() != 2 || w.cols() != x.cols()) {
    throw DimensionError("hcp: W " + shape_to_string(w.shape()) + " and X " +
                         shape_to_string(x.shape()) + " must share the channel dimension");
  }
  if (qw.shape() != w.shape() || qx.shape() != x.shape()) {
    throw DimensionError("hcp: quantized operands do not match their sources");
  }
  PreparedProduct p;
  p.w = w;
  p.x = x;
  p.w_hat = micro::dequantize_tensor(qw);
  p.x_hat = micro::dequantize_tensor(qx);
  p.dw = subtract(w, p.w_hat);
  p.dx = subtract(x, p.x_hat);
  p.base = low_precision_product(qw, qx, p.w_hat, p.x_hat);
  p.qw = std::move(qw);
  p.qx = std::move(qx);
  p.mode = mode;
  return p;
}

}  // namespace

PreparedProduct prepare(const Tensor& w, const Tensor& x, BlockLayout w_layout,
                        BlockLayout x_layout, codec::RoundingMode mode) {
  codec::RoundingMode mw = mode, mx = mode;
  if (mode.stochastic()) {
    mw.seed = derive_seed(mode.seed, 0);
    mx.seed = derive_seed(mode.seed, 1);
  }
  return assemble(w, x, micro::quantize_tensor(w, w_layout, mw),
                  micro::quantize_tensor(x, x_layout, mx), mode);
}

PreparedProduct prepare(const Tensor& w, const Tensor& x, micro::QuantizedTensor qw,
                        micro::QuantizedTensor qx) {
  return assemble(w, x, std::move(qw), std::move(qx), codec::RoundingMode::rtn());
}

std::pair<std::vector<Tensor>, std::vector<Tensor>> patch_segments(const PreparedProduct& p,
                                                                   const HcpConfig& cfg,
                                                                   const ChannelSet& set) {
  HcpConfig c = cfg;
  c.k = set.size();
  c.validate(p.channels());
  check_set(set, p.channels());

  std::vector<Tensor> ws, xs;
  if (set.size() == 0) return {ws, xs};
  const auto& idx = set.indices;
  // Weight-residual pair dW_I . X^_I and activation-residual pair W^_I . dX_I.
  if (c.target == Target::W || c.target == Target::B) {
    ws.push_back(gather_cols(p.dw, idx));
    xs.push_back(gather_cols(p.x_hat, idx));
  }
  if (c.target == Target::A || c.target == Target::B) {
    ws.push_back(gather_cols(p.w_hat, idx));
    xs.push_back(gather_cols(p.dx, idx));
  }
  if (c.patch_precision == PatchPrecision::Nvfp4) {
    for (std::size_t s = 0; s < ws.size(); ++s) {
      ws[s] = quantize_segment(ws[s], 2 * s + 2, p.mode);
      xs[s] = quantize_segment(xs[s], 2 * s + 3, p.mode);
    }
  }
  return {ws, xs};
}

std::pair<Tensor, Tensor> build_patched_operands(const Tensor& w, const Tensor& x,
                                                 const micro::QuantizedTensor& qw,
                                                 const micro::QuantizedTensor& qx,
                                                 const ChannelSet& set, const HcpConfig& cfg) {
  if (cfg.mode != Mode::Single) {
    throw ConfigError("build_patched_operands: only single-kernel configurations concatenate");
  }
  const PreparedProduct p = prepare(w, x, qw, qx);
  auto [ws, xs] = patch_segments(p, cfg, set);
  ws.insert(ws.begin(), p.w_hat);
  xs.insert(xs.begin(), p.x_hat);
  return {concat_cols(ws), concat_cols(xs)};
}

Tensor hcp_matmul(const PreparedProduct& p, const HcpConfig& cfg, const ChannelSet& set) {
  const auto [ws, xs] = patch_segments(p, cfg, set);
  if (ws.empty()) return p.base;
  const Tensor pw = concat_cols(ws);
  const Tensor px = concat_cols(xs);
  if (cfg.mode == Mode::Single) return gemm_nt_accumulate(p.base, pw, px);
  return add(p.base, gemm_nt(pw, px));
}

Tensor hcp_matmul(const PreparedProduct& p, const HcpConfig& cfg, ScoreNorm norm) {
  const auto scores = channel_scores(p.dx, p.dw, norm);
  return hcp_matmul(p, cfg, select_hot_channels(scores, cfg.k));
}

Tensor hcp_matmul(const Tensor& w, const Tensor& x, const HcpConfig& cfg, BlockLayout layout,
                  codec::RoundingMode mode) {
  return hcp_matmul(prepare(w, x, layout, BlockLayout::vec1x16(), mode), cfg);
}

Tensor patched_contraction(const PreparedProduct& p, std::optional<HcpConfig> cfg,
                           const ChannelSet& set) {
  check_set(set, p.channels());
  if (set.size() == 0) throw DimensionError("patched_contraction: empty channel set");
  const Tensor base = gemm_nt(gather_cols(p.w_hat, set.indices), gather_cols(p.x_hat, set.indices));
  if (!cfg) return base;
  const auto [ws, xs] = patch_segments(p, *cfg, set);
  return gemm_nt_accumulate(base, concat_cols(ws), concat_cols(xs));
}

double mse(const Tensor& y, const Tensor& y_ref) {
  if (y.shape() != y_ref.shape()) {
    throw DimensionError("mse: shape mismatch " + shape_to_string(y.shape()) + " vs " +
                         shape_to_string(y_ref.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - y_ref[i];
    s += d * d;
  }
  return s / static_cast<double>(y.size());
}

}  // namespace nvfp4lab::hcp
