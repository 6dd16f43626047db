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
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "nvfp4lab/dense.hpp"
#include "nvfp4lab/diagnostics.hpp"
#include "nvfp4lab/error.hpp"
#include "nvfp4lab/microscale.hpp"
#include "test_support.hpp"

using namespace nvfp4lab;
using namespace nvfp4lab::diag;

namespace {

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("kurtosis of alternating signs is exactly -2") {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i % 2 ? -1.0 : 1.0;
  const auto k = excess_kurtosis(v);
  REQUIRE(k);
  CHECK(*k == -2.0);
}

TEST_CASE("kurtosis calibration on large samples") {
  const auto g = excess_kurtosis(testing::gaussian(1000, 1000, 1).values());
  const auto l = excess_kurtosis(testing::laplace(1000, 1000, 2).values());
  REQUIRE(g);
  REQUIRE(l);
  CHECK(std::abs(*g) < 0.05);
  CHECK(std::abs(*l - 3.0) < 0.1);
}

TEST_CASE("kurtosis matches the two-pass oracle and is affine invariant") {
  const Tensor t = testing::laplace(17, 13, 3);
  const auto v = values_of(t);
  CHECK(*excess_kurtosis(v) == doctest::Approx(testing::naive_kurtosis(v)).epsilon(1e-12));
  for (auto [a, b] : {std::pair{2.0, 0.0}, std::pair{0.01, 5.0}, std::pair{300.0, -70.0}}) {
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = a * v[i] + b;
    CHECK(std::abs(*excess_kurtosis(w) - *excess_kurtosis(v)) < 1e-9);
  }
}

TEST_CASE("zero variance is missing, not zero") {
  const std::vector<double> c(20, 3.5);
  CHECK_FALSE(excess_kurtosis(c).has_value());
  const std::vector<double> big(20, 1e12);
  CHECK_FALSE(excess_kurtosis(big).has_value());
  CHECK_THROWS_AS(excess_kurtosis(std::vector<double>{1, 2, 3}), DimensionError);
}

TEST_CASE("block kurtosis") {
  const Tensor g = testing::gaussian(64, 64, 4);
  const auto bk = block_kurtosis(g);
  CHECK(bk.tiles == 16);
  CHECK(bk.excluded == 0);
  REQUIRE(bk.max);
  CHECK(*bk.max > *bk.avg);
  CHECK(*bk.min <= *bk.avg);

  // Plant an outlier in tile (2, 1).
  auto v = values_of(g);
  v[(2 * 16 + 5) * 64 + 1 * 16 + 9] *= 50.0;
  const Tensor planted = Tensor::matrix(64, 64, v);
  const auto pk = block_kurtosis(planted);
  std::vector<double> tile;
  for (std::size_t r = 32; r < 48; ++r)
    for (std::size_t c = 16; c < 32; ++c) tile.push_back(planted.at(r, c));
  CHECK(*pk.max == doctest::Approx(testing::naive_kurtosis(tile)).epsilon(1e-12));

  const auto cst = block_kurtosis(Tensor::matrix(16, 32, std::vector<double>(512, 2.0)));
  CHECK(cst.tiles == 2);
  CHECK(cst.excluded == 2);
  CHECK_FALSE(cst.min);
  CHECK_FALSE(cst.avg);
  CHECK_FALSE(cst.max);
  CHECK_THROWS_AS(block_kurtosis(Tensor::zeros({20, 16})), DimensionError);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = block_kurtosis(testing::laplace(32, 48, seed));
    CHECK(*r.min <= *r.avg);
    CHECK(*r.avg <= *r.max);
  }
}

TEST_CASE("top-k magnitudes") {
  const auto one = topk_magnitudes(Tensor::vector({-9, 2, 3}), 1);
  CHECK(one.values == std::vector<double>{9});
  CHECK(one.indices == std::vector<std::size_t>{0});

  const auto ties = topk_magnitudes(Tensor::vector({1, -4, 4, 2, -4}), 3);
  CHECK(ties.indices == std::vector<std::size_t>{1, 2, 4});
  CHECK_THROWS_AS(topk_magnitudes(Tensor::vector({1, 2}), 3), DimensionError);

  const Tensor t = testing::gaussian(12, 10, 5);
  const auto rec = topk_magnitudes(t, 15);
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return std::abs(t[a]) > std::abs(t[b]); });
  for (std::size_t i = 0; i < 15; ++i) {
    CHECK(rec.indices[i] == order[i]);
    CHECK(rec.values[i] == std::abs(t[order[i]]));
    CHECK(rec.channel_ids[i] == order[i] % 10);
  }

  // Permuting the values permutes the indices and leaves the magnitudes alone.
  auto v = values_of(t);
  std::reverse(v.begin(), v.end());
  const auto rev = topk_magnitudes(Tensor::matrix(12, 10, v), 15);
  CHECK(rev.values == rec.values);
  for (std::size_t i = 0; i < 15; ++i) CHECK(rev.indices[i] == t.size() - 1 - rec.indices[i]);
}

TEST_CASE("SwiGLU alignment") {
  const Tensor a = testing::gaussian(32, 256, 6);
  CHECK(*swiglu_alignment(a, a).mean_abs_cosine == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(*swiglu_alignment(a, scale(a, -3.0)).mean_abs_cosine == doctest::Approx(1.0).epsilon(1e-14));

  const Tensor e = Tensor::matrix({{1, 0, 0, 0}, {0, 2, 0, 0}});
  const Tensor f = Tensor::matrix({{0, 5, 0, 0}, {0, 0, 0, 1}});
  CHECK(*swiglu_alignment(e, f).mean_abs_cosine == 0.0);

  const Tensor up = testing::gaussian(2000, 256, 7), gate = testing::gaussian(2000, 256, 8);
  const double m = *swiglu_alignment(up, gate).mean_abs_cosine;
  CHECK(std::abs(m - 0.05) <= 0.02);
  CHECK(std::abs(m - std::sqrt(2.0 / (M_PI * 256))) < 0.003);

  const Tensor z = Tensor::matrix({{0, 0, 0, 0}, {1, 1, 0, 0}});
  const auto al = swiglu_alignment(z, Tensor::matrix({{1, 0, 0, 0}, {1, 0, 0, 0}}));
  CHECK(al.excluded_rows == 1);
  CHECK(*al.mean_abs_cosine == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK_FALSE(swiglu_alignment(Tensor::zeros({2, 4}), Tensor::zeros({2, 4})).mean_abs_cosine);
  CHECK_THROWS_AS(swiglu_alignment(a, Tensor::zeros({32, 128})), DimensionError);
}

TEST_CASE("softmax health") {
  const auto u = softmax_health(Tensor::matrix(3, 8, std::vector<double>(24, 1.5)));
  CHECK(u.post_entropy == doctest::Approx(std::log(8.0)).epsilon(1e-14));
  CHECK(u.pre_max == 1.5);
  CHECK_FALSE(u.pre_kurtosis);
  CHECK(u.kurtosis_missing_rows == 3);

  std::vector<double> hot(8, 0.0);
  hot[3] = 20.0;
  const auto h = softmax_health(Tensor::matrix(1, 8, hot));
  CHECK(h.post_entropy < 1e-6);
  CHECK(h.post_entropy >= 0.0);
  CHECK(h.pre_max == 20.0);

  const Tensor r = testing::gaussian(10, 16, 9, 3.0);
  const auto s = softmax_health(r);
  double ent = 0.0, kurt = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto row = r.row(i);
    double z = 0.0;
    for (double x : row) z += std::exp(x);
    double e = 0.0;
    for (double x : row) {
      const double p = std::exp(x) / z;
      e -= p * std::log(p);
    }
    ent += e;
    kurt += testing::naive_kurtosis({row.begin(), row.end()});
    mx += *std::max_element(row.begin(), row.end());
  }
  CHECK(s.post_entropy == doctest::Approx(ent / 10).epsilon(1e-12));
  CHECK(*s.pre_kurtosis == doctest::Approx(kurt / 10).epsilon(1e-12));
  CHECK(s.pre_max == doctest::Approx(mx / 10).epsilon(1e-14));
  CHECK(s.post_entropy <= std::log(16.0));

  // Huge logits must not overflow.
  const auto big = softmax_health(Tensor::matrix(1, 4, {1000, 999, 998, 0}));
  CHECK(std::isfinite(big.post_entropy));
  CHECK_THROWS_AS(softmax_health(Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("weight overlap") {
  CHECK(weight_overlap(Tensor::identity(8)).value == 0.0);
  CHECK(weight_overlap(Tensor::matrix({{1, 2, 3}, {1, 2, 3}})).value ==
        doctest::Approx(2.0).epsilon(1e-14));

  const Tensor w = testing::gaussian(32, 64, 10);
  double oracle = 0.0;
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 32; ++j) {
      if (i == j) continue;
      double dot = 0, ni = 0, nj = 0;
      for (std::size_t c = 0; c < 64; ++c) {
        dot += w.at(i, c) * w.at(j, c);
        ni += w.at(i, c) * w.at(i, c);
        nj += w.at(j, c) * w.at(j, c);
      }
      const double cs = dot / std::sqrt(ni * nj);
      oracle += cs * cs;
    }
  CHECK(weight_overlap(w).value == doctest::Approx(oracle).epsilon(1e-12));

  auto v = values_of(w);
  for (std::size_t c = 0; c < 64; ++c) v[5 * 64 + c] *= 17.0;
  CHECK(weight_overlap(Tensor::matrix(32, 64, v)).value == doctest::Approx(oracle).epsilon(1e-12));

  const auto z = weight_overlap(Tensor::matrix({{1, 0}, {0, 0}, {1, 1}}));
  CHECK(z.excluded_rows == 1);
  CHECK(z.value == doctest::Approx(1.0).epsilon(1e-14));  // 2 * (1/sqrt 2)^2
  CHECK_THROWS_AS(weight_overlap(Tensor::matrix(1, 3, {1, 2, 3})), DimensionError);
}

TEST_CASE("sensitivity score") {
  CHECK(sensitivity_score(2.5, 2.5, 1000) == 0.0);
  CHECK(sensitivity_score(3.02, 3.0, 2'000'000) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(sensitivity_score(2.98, 3.0, 2'000'000) == doctest::Approx(-0.01).epsilon(1e-12));
  CHECK(sensitivity_score(1.5, 1.0, 10, 1.0) == 0.05);
  CHECK_THROWS_AS(sensitivity_score(1, 1, 0), ConfigError);
}

TEST_CASE("report CSV") {
  DiagnosticsReport r("layer0", 12);
  r.add("kurtosis", 1.25);
  r.add("ftz", std::nullopt, "1x16");
  r.add("x", 0.1);
  std::ostringstream os;
  DiagnosticsReport::write_csv_header(os);
  r.write_csv_rows(os);
  CHECK(os.str() ==
        "step,source,metric,axis,value\n"
        "12,layer0,kurtosis,,1.25\n"
        "12,layer0,ftz,1x16,\n"
        "12,layer0,x,,0.10000000000000001\n");
  CHECK(r.find("ftz", "1x16"));
  CHECK_FALSE(r.find("ftz"));
  CHECK(std::stod(format_double(M_PI)) == M_PI);
}

TEST_CASE("tensor metrics") {
  DiagnosticsReport zeros("z", 0);
  add_tensor_metrics(zeros, Tensor::zeros({16, 32}), 4, false);
  CHECK_FALSE(zeros.find("kurtosis")->value);
  CHECK(*zeros.find("ftz", "1x16")->value == 1.0);
  CHECK(*zeros.find("frobenius_energy")->value == 0.0);
  CHECK(*zeros.find("block_kurtosis_excluded")->value == 2.0);

  const Tensor t = testing::laplace(32, 32, 3);
  DiagnosticsReport r("t", 1);
  add_tensor_metrics(r, t, 3, true);
  CHECK(*r.find("kurtosis")->value == *excess_kurtosis(t.values()));
  CHECK(*r.find("ftz", "16x16")->value == micro::ftz_ratio(t, micro::BlockLayout::tile16x16()));
  CHECK(*r.find("topk_value", "rank0")->value == topk_magnitudes(t, 1).values[0]);
  CHECK(r.find("topk_channel", "rank2"));
  CHECK_FALSE(r.find("topk_channel", "rank3"));
  CHECK(*r.find("frobenius_energy")->value == frobenius_energy(t));
}
