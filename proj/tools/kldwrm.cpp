// Copyright 2026 The kldwrm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// kldwrm command-line driver: run, summarize, plot, verify.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>

#include "kldwrm/trainer.hpp"
#include "kldwrm/verify.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::map<std::string, std::string>& overrides,
            bool echo_only) {
  kldwrm::RunConfig cfg = config_path.empty() ? kldwrm::RunConfig{} : kldwrm::load_config(config_path);
  for (const auto& [key, value] : overrides) cfg.set(key, value);
  cfg.validate();
  if (echo_only) {
    std::cout << cfg.to_text();
    return 0;
  }
  const kldwrm::RunMetrics m = kldwrm::run(cfg);
  const kldwrm::EpochRow& last = m.rows.back();
  std::cout << cfg.name() << ": epoch " << last.epoch << " test_acc " << last.test_acc
            << " test_loss " << last.test_loss << "\n";
  if (m.diverged) {
    std::cout << "diverged at " << m.divergence << "\n";
    return 2;
  }
  return 0;
}

int cmd_summarize(const std::vector<std::string>& files, const std::string& label) {
  std::vector<kldwrm::RunMetrics> runs;
  for (const std::string& f : files) runs.push_back(kldwrm::read_csv(f));
  std::cout << kldwrm::format_summary(kldwrm::summarize(runs), label);
  return 0;
}

int cmd_plot(const std::vector<std::string>& files, const std::string& out,
             const std::vector<std::string>& metrics) {
  std::vector<kldwrm::RunMetrics> runs;
  for (const std::string& f : files) runs.push_back(kldwrm::read_csv(f));
  kldwrm::render_curves(runs, out, metrics);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_verify(std::uint64_t seed) {
  namespace v = kldwrm::verify;
  constexpr double kTol = 1e-8;
  bool ok = true;
  v::Grid grid;
  grid.seed = seed;
  for (v::Report r : {v::verify_woqm(grid), v::verify_so(grid)}) {
    std::cout << v::format_report(r) << "\n";
    ok = ok && r.max_error <= kTol;
  }
  v::Grid q_grid = grid;
  q_grid.steps = 12;
  v::Report q = v::verify_q(q_grid);
  q.detail = std::string("q(B=0) == so bitwise: ") + (q.bit_identical ? "yes" : "no");
  std::cout << v::format_report(q) << "\n";
  ok = ok && q.max_error <= kTol && q.bit_identical;
  v::Report vl = v::verify_q_varlambda(20, 12, seed + 10);
  vl.detail = std::string("constant schedule == q bitwise: ") + (vl.bit_identical ? "yes" : "no");
  std::cout << v::format_report(vl) << "\n";
  ok = ok && vl.max_error <= kTol && vl.bit_identical;
  const v::Report kl = v::verify_kld_form(20, seed + 20);
  std::cout << v::format_report(kl) << "\n";
  ok = ok && kl.max_error <= 1e-10;
  const v::BoundednessReport b = v::verify_boundedness(20, 500, 0.9, 0.9, 1.0, seed + 30);
  std::cout << "g_hat boundedness: " << b.runs << " runs, max margin " << b.max_margin
            << ", max ||g_hat|| / bound " << b.max_ratio << "\n";
  ok = ok && b.max_margin <= 0.9 && b.max_excess <= 1e-9;
  std::cout << (ok ? "all propositions verified" : "verification FAILED") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wake-regularized second-order optimizers over Kronecker-factored curvature"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Train one seeded run and write its metrics CSV");
  std::string config_path;
  bool echo_only = false;
  run->add_option("-c,--config", config_path, "key = value config file");
  run->add_flag("--echo-config", echo_only, "Print the resolved config and exit");
  std::map<std::string, std::string> overrides;
  std::map<std::string, std::string> raw;
  for (const std::string& key : kldwrm::config_keys()) {
    run->add_option("--" + key, raw[key], "Override config key " + key);
  }

  auto* summarize = app.add_subcommand("summarize", "Summary statistics over metric CSVs");
  std::vector<std::string> sum_files;
  std::string label = "runs";
  summarize->add_option("files", sum_files, "Metric CSV files")->required()->check(CLI::ExistingFile);
  summarize->add_option("-l,--label", label, "Row label (kfac, so, q, qe adds a reference row)");

  auto* plot = app.add_subcommand("plot", "Render learning curves to SVG");
  std::vector<std::string> plot_files;
  std::string plot_out = "curves.svg";
  std::vector<std::string> metrics{"test_acc", "test_loss"};
  plot->add_option("files", plot_files, "Metric CSV files")->required()->check(CLI::ExistingFile);
  plot->add_option("-o,--out", plot_out, "Output SVG path");
  plot->add_option("-m,--metrics", metrics, "Metrics to plot");

  auto* verify = app.add_subcommand("verify", "Check the step recursions against dense solutions");
  std::uint64_t seed = 1;
  verify->add_option("--seed", seed, "Random seed for the instances");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      for (const std::string& key : kldwrm::config_keys()) {
        if (run->count("--" + key) > 0) overrides[key] = raw[key];
      }
      return cmd_run(config_path, overrides, echo_only);
    }
    if (summarize->parsed()) return cmd_summarize(sum_files, label);
    if (plot->parsed()) return cmd_plot(plot_files, plot_out, metrics);
    if (verify->parsed()) return cmd_verify(seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
