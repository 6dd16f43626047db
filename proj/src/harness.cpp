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

#include "nvfp4lab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "nvfp4lab/error.hpp"
#include "nvfp4lab/rht.hpp"
#include "nvfp4lab/rng.hpp"
#include "nvfp4lab/tensor_io.hpp"

namespace nvfp4lab::harness {

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

void SweepSpec::validate() const {
  if (sizes.empty() || configs.empty() || priors.empty() || (!k_auto && ks.empty())) {
    throw ConfigError("sweep: sizes, configs, priors and ks must be non-empty");
  }
  if (trials == 0) throw ConfigError("sweep: trials must be positive");
  if (tokens == 0 || tokens % 16 != 0) throw ConfigError("sweep: tokens must be a positive multiple of 16");
  if (!(prior_scale > 0.0)) throw ConfigError("sweep: prior scale must be positive");
  for (const auto& c : configs) hcp::HcpConfig::parse(c);
  for (std::size_t s : sizes) {
    if (s == 0 || s % 16 != 0) throw ConfigError("sweep: size " + std::to_string(s) + " is not a multiple of 16");
    if (!k_auto)
      for (std::size_t k : ks)
        if (k > s) throw ConfigError("sweep: k = " + std::to_string(k) + " exceeds size " + std::to_string(s));
  }
}

namespace {

struct Moments {
  double mean = 0.0;
  double stderr_ = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  const double n = static_cast<double>(v.size());
  for (double x : v) m.mean += x;
  m.mean /= n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  }
  return m;
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
  spec.validate();
  std::vector<hcp::HcpConfig> configs;
  for (const auto& c : spec.configs) {
    hcp::HcpConfig h = hcp::HcpConfig::parse(c);
    h.patch_precision = spec.patch_precision;
    configs.push_back(h);
  }

  std::vector<SweepRow> rows;
  for (std::size_t size : spec.sizes) {
    const std::vector<std::size_t> ks =
        spec.k_auto ? std::vector<std::size_t>{hcp::default_patch_count(size)} : spec.ks;
    for (std::size_t pi = 0; pi < spec.priors.size(); ++pi) {
      const Distribution prior = spec.priors[pi];
      // mse[trial][0] is the baseline; then k-major, config-minor.
      const std::size_t cells = 1 + ks.size() * configs.size();
      std::vector<std::vector<double>> mse(spec.trials, std::vector<double>(cells));

      const auto ntrials = static_cast<std::ptrdiff_t>(spec.trials);
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t ti = 0; ti < ntrials; ++ti) {
        const auto trial = static_cast<std::size_t>(ti);
        const std::uint64_t cell = derive_seed(spec.seed, size, static_cast<std::uint64_t>(prior), trial);
        const Tensor w = sample_prior({prior, spec.prior_scale, derive_seed(cell, 0)}, {size, size});
        const Tensor x = sample_prior({prior, spec.prior_scale, derive_seed(cell, 1)}, {spec.tokens, size});
        const Tensor ref = gemm_nt(w, x);
        const hcp::PreparedProduct p = hcp::prepare(w, x, spec.weight_layout);
        const auto scores = hcp::channel_scores(p.dx, p.dw);
        auto& out = mse[trial];
        out[0] = hcp::mse(p.base, ref);
        for (std::size_t ki = 0; ki < ks.size(); ++ki) {
          const hcp::ChannelSet set = hcp::select_hot_channels(scores, ks[ki]);
          for (std::size_t ci = 0; ci < configs.size(); ++ci) {
            out[1 + ki * configs.size() + ci] = hcp::mse(hcp::hcp_matmul(p, configs[ci], set), ref);
          }
        }
      }

      auto column = [&](std::size_t c) {
        std::vector<double> v(spec.trials);
        for (std::size_t t = 0; t < spec.trials; ++t) v[t] = mse[t][c];
        return moments(v);
      };
      const Moments base = column(0);
      rows.push_back({size, prior, "baseline", 0, base.mean, base.stderr_, spec.trials});
      for (std::size_t ki = 0; ki < ks.size(); ++ki)
        for (std::size_t ci = 0; ci < configs.size(); ++ci) {
          const Moments m = column(1 + ki * configs.size() + ci);
          rows.push_back({size, prior, configs[ci].name(), ks[ki], m.mean, m.stderr_, spec.trials});
        }
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << kSweepHeader << '\n';
  for (const auto& r : rows) {
    os << r.size << ',' << to_string(r.prior) << ',' << r.config << ',' << r.k << ','
       << diag::format_double(r.mean_mse) << ',' << diag::format_double(r.stderr_mse) << ','
       << r.n_trials << '\n';
  }
}

// ---------------------------------------------------------------------------
// Verify
// ---------------------------------------------------------------------------

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

void VerifyReport::print(std::ostream& os) const {
  char line[256];
  for (const auto& c : checks) {
    std::snprintf(line, sizeof line, "%-34s %s %.3e (%s %.1e)  %s\n", c.name.c_str(),
                  c.higher_is_better ? "value" : "residual", c.value,
                  c.higher_is_better ? "min" : "max", c.threshold, c.passed ? "PASS" : "FAIL");
    os << line;
  }
  os << (all_passed() ? "all checks passed\n" : "some checks FAILED\n");
}

OrderingTrial ordering_trial(std::uint64_t seed, std::size_t n, double fraction) {
  const Tensor w = sample_prior({Distribution::Gaussian, 1.0, derive_seed(seed, 0)}, {n, n});
  const Tensor x = sample_prior({Distribution::Gaussian, 1.0, derive_seed(seed, 1)}, {n, n});
  const hcp::PreparedProduct p = hcp::prepare(w, x);
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  const hcp::ChannelSet set = hcp::select_hot_channels(hcp::channel_scores(p.dx, p.dw), k);
  const Tensor ref = gemm_nt(gather_cols(w, set.indices), gather_cols(x, set.indices));

  hcp::HcpConfig o1a = hcp::HcpConfig::parse("S-O1-A");
  hcp::HcpConfig o2b = hcp::HcpConfig::parse("S-O2-B");
  o1a.patch_precision = o2b.patch_precision = hcp::PatchPrecision::Exact;
  OrderingTrial t;
  t.baseline = hcp::mse(hcp::patched_contraction(p, std::nullopt, set), ref);
  t.o1a = hcp::mse(hcp::patched_contraction(p, o1a, set), ref);
  t.o2b = hcp::mse(hcp::patched_contraction(p, o2b, set), ref);
  return t;
}

namespace {

hcp::ChannelSet all_channels(std::size_t n) {
  hcp::ChannelSet s;
  s.indices.resize(n);
  std::iota(s.indices.begin(), s.indices.end(), std::size_t{0});
  s.scores.assign(n, 0.0);
  return s;
}

hcp::HcpConfig exact(const char* name, std::size_t k = 0) {
  hcp::HcpConfig c = hcp::HcpConfig::parse(name);
  c.patch_precision = hcp::PatchPrecision::Exact;
  c.k = k;
  return c;
}

Check residual_check(std::string name, double worst, double threshold = 1e-9) {
  return {std::move(name), worst, threshold, false, worst <= threshold};
}

}  // namespace

VerifyReport verify_identities(const VerifyOptions& opts) {
  constexpr std::size_t n = 32;
  double decomp = 0, o1a = 0, o1w = 0, o2b = 0, o2b_hot = 0, three = 0, modes = 0, qg = 0, rh = 0;
  for (std::size_t i = 0; i < opts.identity_instances; ++i) {
    const Distribution prior = i % 2 ? Distribution::Laplace : Distribution::Gaussian;
    const Tensor w = sample_prior({prior, 1.0, derive_seed(opts.seed, 1, i, 0)}, {n, n});
    const Tensor x = sample_prior({prior, 1.0, derive_seed(opts.seed, 1, i, 1)}, {n, n});
    const hcp::PreparedProduct p = hcp::prepare(w, x);
    const Tensor y = gemm_nt(w, x);
    const Tensor w_dx = gemm_nt(w, p.dx), dw_x = gemm_nt(p.dw, x), dw_dx = gemm_nt(p.dw, p.dx);
    const hcp::ChannelSet all = all_channels(n);

    decomp = std::max(decomp, max_relative_error(p.base, add(subtract(subtract(y, w_dx), dw_x), dw_dx)));
    o1a = std::max(o1a, max_relative_error(hcp::hcp_matmul(p, exact("S-O1-A"), all), subtract(y, dw_x)));
    o1w = std::max(o1w, max_relative_error(hcp::hcp_matmul(p, exact("S-O1-W"), all), subtract(y, w_dx)));
    o2b = std::max(o2b, max_relative_error(hcp::hcp_matmul(p, exact("S-O2-B"), all), subtract(y, dw_dx)));

    const hcp::ChannelSet hot = hcp::select_hot_channels(hcp::channel_scores(p.dx, p.dw), 8);
    const auto& I = hot.indices;
    const Tensor wi = gather_cols(w, I), xi = gather_cols(x, I);
    const Tensor dwi = gather_cols(p.dw, I), dxi = gather_cols(p.dx, I);
    o2b_hot = std::max(o2b_hot, max_relative_error(hcp::patched_contraction(p, exact("S-O2-B"), hot),
                                                       subtract(gemm_nt(wi, xi), gemm_nt(dwi, dxi))));

    // Concatenated single-kernel operands against baseline + the two cross terms.
    const hcp::ChannelSet four = hcp::select_hot_channels(hcp::channel_scores(p.dx, p.dw), 4);
    const auto [wo, xo] = hcp::build_patched_operands(w, x, p.qw, p.qx, four, exact("S-O2-B"));
    const Tensor cross = add(gemm_nt(gather_cols(p.dw, four.indices), gather_cols(p.x_hat, four.indices)),
                             gemm_nt(gather_cols(p.w_hat, four.indices), gather_cols(p.dx, four.indices)));
    three = std::max(three, max_relative_error(gemm_nt(wo, xo), add(p.base, cross)));

    modes = std::max(modes, max_relative_error(hcp::hcp_matmul(p, exact("S-O2-B", 8)),
                                               hcp::hcp_matmul(p, exact("D-O2-B", 8))));
    qg = std::max(qg, max_relative_error(micro::qgemm(p.qw, p.qx), gemm_nt(p.w_hat, p.x_hat)));

    const Tensor xs = sample_prior({prior, 1.0, derive_seed(opts.seed, 2, i, 0)}, {32, 8});
    const Tensor gs = sample_prior({prior, 1.0, derive_seed(opts.seed, 2, i, 1)}, {32, 4});
    rht::WgradOptions wo_opts;
    wo_opts.quantize = false;
    wo_opts.d_seed = derive_seed(opts.seed, 3, i);
    rh = std::max(rh, max_relative_error(rht::wgrad_with_rht(xs, gs, wo_opts), gemm(transpose(xs), gs)));
  }

  std::size_t ordered = 0;
  for (std::size_t t = 0; t < opts.ordering_trials; ++t)
    ordered += ordering_trial(derive_seed(opts.seed, 4, t)).ordered();
  const double frac = opts.ordering_trials
                          ? static_cast<double>(ordered) / static_cast<double>(opts.ordering_trials)
                          : 1.0;

  VerifyReport r;
  r.checks.push_back(residual_check("error_decomposition", decomp));
  r.checks.push_back(residual_check("o1a_all_channels", o1a));
  r.checks.push_back(residual_check("o1w_all_channels", o1w));
  r.checks.push_back(residual_check("o2b_all_channels", o2b));
  r.checks.push_back(residual_check("o2b_hot_contraction", o2b_hot));
  r.checks.push_back(residual_check("patched_operands_vs_three_gemm", three));
  r.checks.push_back(residual_check("single_dual_equivalence", modes));
  r.checks.push_back(residual_check("qgemm_descaling_identity", qg));
  r.checks.push_back(residual_check("rht_wgrad_invariance", rh));
  r.checks.push_back({"error_order_pass_fraction", frac, 0.95, true, frac >= 0.95});
  return r;
}

// ---------------------------------------------------------------------------
// Analyze
// ---------------------------------------------------------------------------

diag::DiagnosticsReport analyze_dump(const std::filesystem::path& path, const AnalyzeOptions& opts) {
  Tensor t = io::read_nvt1(path);
  t = Tensor::matrix(t.rows(), t.cols(), std::move(t).release());
  if (opts.pad) {
    t = pad_to(t, (t.rows() + 15) / 16 * 16, (t.cols() + 15) / 16 * 16);
  } else if (t.rows() % 16 != 0 || t.cols() % 16 != 0) {
    throw DimensionError("analyze: " + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                         " does not divide into 16x16 tiles; use --pad");
  }
  diag::DiagnosticsReport rep(path.filename().string(), opts.step);
  diag::add_tensor_metrics(rep, t, opts.topk, opts.two_d);
  return rep;
}

}  // namespace nvfp4lab::harness
