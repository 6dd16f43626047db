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

// nvfp4lab: sweeps, identity checks, dump diagnostics and toy training runs.
//
// Exit codes: 0 success, 1 a check failed, 2 usage error, 3 I/O or parse error.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nvfp4lab/error.hpp"
#include "nvfp4lab/harness.hpp"
#include "nvfp4lab/quantlinear.hpp"

namespace {

using namespace nvfp4lab;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;
constexpr int kIo = 3;

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string layout = "1d";
  std::string config;
};

micro::BlockLayout parse_layout(const std::string& s) {
  if (s == "1d") return micro::BlockLayout::vec1x16();
  if (s == "2d") return micro::BlockLayout::tile16x16();
  throw ConfigError("layout must be 1d or 2d, got '" + s + "'");
}

// Output goes to the --out file, or stdout when it is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
    if (!*file_) throw IoError("cannot write " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void finish() {
    if (file_) {
      file_->close();
      if (!*file_) throw IoError("write failed");
    }
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

void add_common(CLI::App* sub, Common& c, bool with_layout) {
  sub->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  sub->add_option("--out", c.out, "Output file (default: stdout)");
  if (with_layout) {
    sub->add_option("--layout", c.layout, "Block layout for weights: 1d (1x16) or 2d (16x16)")
        ->check(CLI::IsMember({"1d", "2d"}))
        ->capture_default_str();
  }
  sub->add_option("--config", c.config, "Flat key=value file; keys are long option names");
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Reads a flat key=value file into "--key=value" arguments for `sub`. Keys
// already given on the command line are skipped so the command line wins.
std::vector<std::string> config_args(const CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::vector<std::string> args;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto where = path + ":" + std::to_string(n) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config") throw ConfigError(where + "config files cannot include other config files");
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw ConfigError(where + "unknown key '" + key + "' for " + sub->get_name());
    if (opt->count() > 0) continue;
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

// --k accepts a count or "auto" (ceil(9.09% of channels)).
struct KOption {
  std::string text;
  bool given() const { return !text.empty(); }
  bool is_auto() const { return text == "auto"; }
  std::size_t value() const {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(text, &pos);
    if (pos != text.size()) throw ConfigError("--k expects a count or 'auto'");
    return static_cast<std::size_t>(v);
  }
};

int run_sweep(const Common& c, harness::SweepSpec spec, const std::vector<std::string>& priors,
              const std::string& hcp, const KOption& k, const std::string& precision) {
  spec.seed = c.seed;
  spec.weight_layout = parse_layout(c.layout);
  spec.priors.clear();
  for (const auto& p : priors) spec.priors.push_back(parse_distribution(p));
  if (!hcp.empty()) spec.configs = {hcp};
  if (k.given()) {
    spec.k_auto = k.is_auto();
    if (!spec.k_auto) spec.ks = {k.value()};
  }
  if (precision == "exact") spec.patch_precision = hcp::PatchPrecision::Exact;
  else if (precision != "nvfp4") throw ConfigError("--patch-precision must be nvfp4 or exact");

  const auto rows = harness::run_sweep(spec);
  Output out(c.out);
  harness::write_sweep_csv(out.stream(), rows);
  out.finish();
  return kOk;
}

int run_verify(const Common& c, std::size_t trials, std::size_t instances) {
  harness::VerifyOptions o;
  o.seed = c.seed;
  o.ordering_trials = trials;
  o.identity_instances = instances;
  const auto report = harness::verify_identities(o);
  Output out(c.out);
  report.print(out.stream());
  out.finish();
  return report.all_passed() ? kOk : kCheckFailed;
}

int run_analyze(const Common& c, const std::string& path, bool pad, std::size_t topk,
                std::int64_t step) {
  harness::AnalyzeOptions o;
  o.pad = pad;
  o.two_d = c.layout == "2d";
  o.topk = topk;
  o.step = step;
  const auto rep = harness::analyze_dump(path, o);
  Output out(c.out);
  diag::DiagnosticsReport::write_csv_header(out.stream());
  rep.write_csv_rows(out.stream());
  out.finish();
  return kOk;
}

int run_train(const Common& c, const std::vector<std::string>& variants, std::size_t steps,
              double lr, const std::string& hcp, const KOption& k, const std::string& diag_out,
              std::size_t diag_every) {
  std::vector<qlinear::Variant> vs;
  for (const auto& v : variants) {
    if (v == "all") {
      vs = {qlinear::Variant::Exact, qlinear::Variant::Nvfp4, qlinear::Variant::NvfpHcp};
      break;
    }
    vs.push_back(qlinear::parse_variant(v));
  }

  qlinear::TrainOptions base;
  base.steps = steps;
  base.seed = c.seed;
  base.learning_rate = lr;
  base.weight_layout = parse_layout(c.layout);
  if (!hcp.empty() || k.given()) {
    hcp::HcpConfig h = hcp::HcpConfig::parse(hcp.empty() ? "S-O2-B" : hcp);
    if (k.given() && !k.is_auto()) h.k = k.value();
    base.hcp = h;
  }

  std::unique_ptr<std::ofstream> diag;
  if (!diag_out.empty()) {
    diag = std::make_unique<std::ofstream>(diag_out, std::ios::trunc);
    if (!*diag) throw IoError("cannot write " + diag_out);
    diag::DiagnosticsReport::write_csv_header(*diag);
  }

  Output out(c.out);
  out.stream() << "variant,step,loss\n";
  std::optional<double> exact_final;
  std::vector<std::pair<qlinear::Variant, double>> finals;
  for (qlinear::Variant v : vs) {
    qlinear::TrainOptions o = base;
    o.variant = v;
    if (diag) {
      o.diag_every = diag_every;
      o.diag_out = diag.get();
    }
    const auto losses = qlinear::toy_train(o);
    for (std::size_t s = 0; s < losses.size(); ++s)
      out.stream() << qlinear::to_string(v) << ',' << s << ',' << diag::format_double(losses[s]) << '\n';
    if (!losses.empty()) {
      finals.emplace_back(v, losses.back());
      if (v == qlinear::Variant::Exact) exact_final = losses.back();
    }
  }
  out.finish();

  for (const auto& [v, loss] : finals) {
    std::fprintf(stderr, "%-10s final loss %.6e", std::string(qlinear::to_string(v)).c_str(), loss);
    if (exact_final && v != qlinear::Variant::Exact)
      std::fprintf(stderr, "  loss gap %+.3f%%", 100.0 * qlinear::loss_gap(loss, *exact_final));
    std::fprintf(stderr, "\n");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NVFP4 quantization lab: prior sweeps, identity checks, diagnostics, toy training"};
  app.require_subcommand(1);

  auto* sweep = app.add_subcommand("sweep", "HCP configuration sweep over random priors (CSV)");
  Common sweep_c;
  add_common(sweep, sweep_c, true);
  harness::SweepSpec spec;
  std::vector<std::string> priors{"gaussian", "laplace"};
  std::string sweep_hcp, precision = "nvfp4";
  KOption sweep_k;
  sweep->add_option("--sizes", spec.sizes, "Hidden sizes (W is size x size)")->delimiter(',')->capture_default_str();
  sweep->add_option("--ks", spec.ks, "Patch counts")->delimiter(',')->capture_default_str();
  sweep->add_option("--k", sweep_k.text, "Single patch count, or 'auto'");
  sweep->add_option("--configs", spec.configs, "HCP configurations")->delimiter(',')->capture_default_str();
  sweep->add_option("--hcp", sweep_hcp, "Run only this configuration (e.g. S-O2-B)");
  sweep->add_option("--priors", priors, "gaussian and/or laplace")->delimiter(',')->capture_default_str();
  sweep->add_option("--prior-scale", spec.prior_scale, "Prior std-dev (Gaussian) or b (Laplace)")->capture_default_str();
  sweep->add_option("--tokens", spec.tokens, "Rows of X")->capture_default_str();
  sweep->add_option("--trials", spec.trials, "Trials per cell")->capture_default_str();
  sweep->add_option("--patch-precision", precision, "nvfp4 or exact")->capture_default_str();

  auto* verify = app.add_subcommand("verify", "Check the compensation identities and error ordering");
  Common verify_c;
  add_common(verify, verify_c, false);
  std::size_t verify_trials = 100, verify_instances = 50;
  verify->add_option("--trials", verify_trials, "Ordering trials")->capture_default_str();
  verify->add_option("--instances", verify_instances, "Random instances per identity")->capture_default_str();

  auto* analyze = app.add_subcommand("analyze", "Diagnostics for an NVT1 tensor dump (CSV)");
  Common analyze_c;
  add_common(analyze, analyze_c, true);
  std::string dump;
  bool pad = false;
  std::size_t topk = 8;
  std::int64_t step = 0;
  analyze->add_option("path", dump, "NVT1 file")->required();
  analyze->add_flag("--pad", pad, "Zero-pad to multiples of 16");
  analyze->add_option("--topk", topk, "Top-k magnitudes to report")->capture_default_str();
  analyze->add_option("--step", step, "Step column value")->capture_default_str();

  auto* train = app.add_subcommand("train", "Toy SwiGLU MLP training runs (loss CSV)");
  Common train_c;
  train_c.layout = "2d";  // the recipe scales weights in 16x16 tiles
  add_common(train, train_c, true);
  std::vector<std::string> variants{"all"};
  std::size_t steps = 300, diag_every = 10;
  double lr = qlinear::TrainOptions{}.learning_rate;
  std::string train_hcp, diag_out;
  KOption train_k;
  train->add_option("--variant", variants, "exact, nvfp4, nvfp4-hcp or all")->delimiter(',')->capture_default_str();
  train->add_option("--steps", steps, "SGD steps")->capture_default_str();
  train->add_option("--lr", lr, "Learning rate")->capture_default_str();
  train->add_option("--hcp", train_hcp, "HCP configuration of the nvfp4-hcp variant");
  train->add_option("--k", train_k.text, "Patch count of the nvfp4-hcp variant, or 'auto'");
  train->add_option("--diag-out", diag_out, "Diagnostics CSV");
  train->add_option("--diag-every", diag_every, "Diagnostics period in steps")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (auto [sub, c] : {std::pair{sweep, &sweep_c}, {verify, &verify_c}, {analyze, &analyze_c},
                          {train, &train_c}}) {
      if (!*sub || c->config.empty()) continue;
      std::vector<std::string> args(argv + 1, argv + argc);
      const auto extra = config_args(sub, c->config);
      args.insert(args.end(), extra.begin(), extra.end());
      std::reverse(args.begin(), args.end());  // CLI11 consumes the vector from the back
      app.clear();
      try {
        app.parse(args);
      } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
      }
    }

    if (*sweep) return run_sweep(sweep_c, spec, priors, sweep_hcp, sweep_k, precision);
    if (*verify) return run_verify(verify_c, verify_trials, verify_instances);
    if (*analyze) return run_analyze(analyze_c, dump, pad, topk, step);
    if (*train) return run_train(train_c, variants, steps, lr, train_hcp, train_k, diag_out, diag_every);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DimensionError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
  return kUsage;
}
