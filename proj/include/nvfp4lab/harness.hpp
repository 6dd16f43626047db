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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nvfp4lab/dense.hpp"
#include "nvfp4lab/diagnostics.hpp"
#include "nvfp4lab/hcp.hpp"
#include "nvfp4lab/microscale.hpp"

// Batch operations behind the command-line tool.
namespace nvfp4lab::harness {

// ---------------------------------------------------------------------------
// Prior sweeps
// ---------------------------------------------------------------------------

struct SweepSpec {
  std::vector<std::size_t> sizes{256, 1024, 2048};  ///< W is size x size
  std::vector<std::size_t> ks{16, 32, 64, 128};
  bool k_auto = false;  ///< replace ks by default_patch_count(size)
  std::vector<std::string> configs{"S-O1-W", "S-O1-A", "S-O2-B", "D-O1-W", "D-O1-A", "D-O2-B"};
  std::vector<Distribution> priors{Distribution::Gaussian, Distribution::Laplace};
  double prior_scale = 1.0;
  std::size_t tokens = 128;  ///< X is tokens x size
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  micro::BlockLayout weight_layout = micro::BlockLayout::vec1x16();
  hcp::PatchPrecision patch_precision = hcp::PatchPrecision::Nvfp4;

  /// Throws ConfigError on unparsable configs or empty lists.
  void validate() const;
};

struct SweepRow {
  std::size_t size = 0;
  Distribution prior = Distribution::Gaussian;
  std::string config;  ///< "baseline" for the uncompensated row
  std::size_t k = 0;
  double mean_mse = 0.0;
  double stderr_mse = 0.0;
  std::size_t n_trials = 0;
};

/// For every (size, prior, trial) one (W, X) pair is drawn from a stream
/// derived from (seed, size, prior, trial) and shared by every config and k,
/// so the rows of a group are paired comparisons. MSE is measured against
/// the 64-bit product. Rows are ordered size, prior, baseline, then k, config.
std::vector<SweepRow> run_sweep(const SweepSpec& spec);

inline constexpr const char* kSweepHeader = "size,prior,config,k,trial_mean_mse,trial_stderr,n_trials";
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------
// Identity and ordering checks
// ---------------------------------------------------------------------------

struct Check {
  std::string name;
  double value = 0.0;      ///< residual or pass fraction
  double threshold = 0.0;
  bool higher_is_better = false;
  bool passed = false;
};

struct VerifyReport {
  std::vector<Check> checks;
  bool all_passed() const;
  void print(std::ostream& os) const;
};

/// MSEs on the patched contraction W_I X_I^T for one random instance.
struct OrderingTrial {
  double baseline = 0.0;
  double o1a = 0.0;
  double o2b = 0.0;
  bool ordered() const { return o2b < o1a && o1a < baseline; }
};

/// Gaussian W (n x n) and X (n x n), NVFP4 residuals, I = top `fraction` of
/// channels by score, exact patches.
OrderingTrial ordering_trial(std::uint64_t seed, std::size_t n = 64, double fraction = 0.125);

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t identity_instances = 50;
  std::size_t ordering_trials = 100;
};

VerifyReport verify_identities(const VerifyOptions& opts);

// ---------------------------------------------------------------------------
// Dump analysis
// ---------------------------------------------------------------------------

struct AnalyzeOptions {
  bool pad = false;  ///< zero-pad rows and columns up to multiples of 16
  bool two_d = false;
  std::size_t topk = 8;
  std::int64_t step = 0;
};

/// Reads an NVT1 file and computes its diagnostics. Throws ParseError for
/// malformed files and DimensionError when the matrix view does not divide
/// into 16x16 tiles and pad is off.
diag::DiagnosticsReport analyze_dump(const std::filesystem::path& path, const AnalyzeOptions& opts);

}  // namespace nvfp4lab::harness
