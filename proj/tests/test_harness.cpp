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

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "doctest.h"
#include "nvfp4lab/error.hpp"
#include "nvfp4lab/harness.hpp"
#include "nvfp4lab/tensor_io.hpp"
#include "test_support.hpp"

using namespace nvfp4lab;
using namespace nvfp4lab::harness;

namespace {

SweepSpec small_spec() {
  SweepSpec s;
  s.sizes = {64};
  s.ks = {8, 16};
  s.tokens = 32;
  s.trials = 6;
  s.seed = 5;
  return s;
}

std::string csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  write_sweep_csv(os, rows);
  return os.str();
}

}  // namespace

TEST_CASE("sweep spec validation") {
  SweepSpec s = small_spec();
  CHECK_NOTHROW(s.validate());
  s.configs = {"S-O2-A"};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.ks = {65};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.sizes = {40};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.trials = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.priors.clear();
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.prior_scale = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("sweep rows and CSV") {
  const auto rows = run_sweep(small_spec());
  // Per prior: baseline + 2 ks x 6 configs.
  REQUIRE(rows.size() == 2 * 13);
  CHECK(rows[0].config == "baseline");
  CHECK(rows[0].k == 0);
  CHECK(rows[1].config == "S-O1-W");
  CHECK(rows[1].k == 8);
  CHECK(rows[13].prior == Distribution::Laplace);
  for (const auto& r : rows) CHECK(r.n_trials == 6);

  const std::string text = csv(rows);
  CHECK(text.rfind("size,prior,config,k,trial_mean_mse,trial_stderr,n_trials\n", 0) == 0);
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  std::getline(is, line);
  CHECK(line.rfind("64,gaussian,baseline,0,", 0) == 0);

  // Same spec, same bytes.
  CHECK(csv(run_sweep(small_spec())) == text);
}

TEST_CASE("sweep with only k = 0 reproduces the baseline") {
  SweepSpec s = small_spec();
  s.ks = {0};
  const auto rows = run_sweep(s);
  for (const auto& r : rows) {
    const SweepRow& base = r.prior == Distribution::Gaussian ? rows[0] : rows[7];
    CHECK(std::abs(r.mean_mse - base.mean_mse) <= 1e-12 * base.mean_mse);
  }
}

TEST_CASE("sweep ordering at small scale") {
  SweepSpec s = small_spec();
  s.sizes = {128};
  s.ks = {16};
  s.trials = 10;
  const auto rows = run_sweep(s);
  std::map<std::string, double> g;
  for (const auto& r : rows)
    if (r.prior == Distribution::Gaussian) g[r.config] = r.mean_mse;
  for (const auto& [name, m] : g) {
    CHECK(m <= g["baseline"]);
    if (name != "S-O2-B") CHECK(g["S-O2-B"] <= m * (1 + 1e-9));
  }
}

TEST_CASE("doubling trials moves means by less than two standard errors") {
  SweepSpec s = small_spec();
  s.priors = {Distribution::Laplace};
  s.trials = 20;
  const auto a = run_sweep(s);
  s.trials = 40;
  const auto b = run_sweep(s);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double se = std::hypot(a[i].stderr_mse, b[i].stderr_mse);
    CHECK(std::abs(a[i].mean_mse - b[i].mean_mse) < 2 * se);
  }
}

TEST_CASE("k auto and 2D weights") {
  SweepSpec s = small_spec();
  s.k_auto = true;
  s.ks.clear();
  s.weight_layout = micro::BlockLayout::tile16x16();
  s.priors = {Distribution::Gaussian};
  const auto rows = run_sweep(s);
  CHECK(rows.size() == 7);
  CHECK(rows[1].k == 6);  // ceil(0.0909 * 64)
}

TEST_CASE("verify passes with the default seed") {
  VerifyOptions o;
  o.identity_instances = 10;
  o.ordering_trials = 40;
  const auto r = verify_identities(o);
  CHECK(r.all_passed());
  CHECK(r.checks.size() == 10);
  std::ostringstream a, b;
  r.print(a);
  verify_identities(o).print(b);
  CHECK(a.str() == b.str());
  CHECK(a.str().find("FAIL") == std::string::npos);
}

TEST_CASE("ordering trial") {
  std::size_t ordered = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto t = ordering_trial(s);
    CHECK(t.baseline > 0.0);
    ordered += t.ordered();
  }
  CHECK(ordered >= 19);
}

TEST_CASE("report formatting") {
  VerifyReport r;
  r.checks.push_back({"x", 1e-12, 1e-9, false, true});
  r.checks.push_back({"y", 0.5, 0.95, true, false});
  CHECK_FALSE(r.all_passed());
  std::ostringstream os;
  r.print(os);
  CHECK(os.str().find("PASS\n") != std::string::npos);
  CHECK(os.str().find("FAIL\n") != std::string::npos);
}

TEST_CASE("analyze a dump") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto zeros = dir / "nvfp4lab_harness_zeros.nvt";
  io::write_nvt1(zeros, Tensor::zeros({16, 32}));
  const auto z = analyze_dump(zeros, {});
  CHECK(*z.find("ftz", "1x16")->value == 1.0);
  CHECK(*z.find("frobenius_energy")->value == 0.0);
  CHECK_FALSE(z.find("kurtosis")->value);

  // In-memory metrics and the file path agree.
  std::vector<double> v(48 * 32);
  const Tensor g = testing::laplace(48, 32, 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(g[i]);
  const Tensor t = Tensor::matrix(48, 32, v);
  const auto path = dir / "nvfp4lab_harness_rand.nvt";
  io::write_nvt1(path, t);
  AnalyzeOptions o;
  o.two_d = true;
  o.step = 9;
  const auto rep = analyze_dump(path, o);
  diag::DiagnosticsReport mem(path.filename().string(), 9);
  diag::add_tensor_metrics(mem, t, 8, true);
  std::ostringstream a, b;
  rep.write_csv_rows(a);
  mem.write_csv_rows(b);
  CHECK(a.str() == b.str());

  // Rank-3 dumps are viewed as rows x last dim.
  io::write_nvt1(path, Tensor(Shape{2, 16, 16}, std::vector<double>(512, 1.0)));
  CHECK(analyze_dump(path, {}).find("frobenius_energy")->value == 512.0);

  io::write_nvt1(path, Tensor::zeros({10, 20}));
  CHECK_THROWS_AS(analyze_dump(path, {}), DimensionError);
  AnalyzeOptions pad;
  pad.pad = true;
  CHECK(*analyze_dump(path, pad).find("ftz", "1x16")->value == 1.0);

  auto bytes = io::read_file(path);
  bytes.resize(bytes.size() - 5);
  io::write_file(path, bytes);
  CHECK_THROWS_AS(analyze_dump(path, {}), ParseError);
  std::filesystem::remove(path);
  std::filesystem::remove(zeros);
  CHECK_THROWS_AS(analyze_dump(path, {}), IoError);
}
