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

// Config-driven training runs, per-epoch metrics, multi-run summaries and
// SVG learning curves.
//
// Per step: loss gradient on the batch; every update_period steps the
// Kronecker factors refresh from model-sampled labels; the solver step is
// clipped and applied together with decoupled weight decay:
//
//   theta <- theta + s - (weight_decay / lambda_k) theta

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kldwrm/data.hpp"
#include "kldwrm/qe.hpp"
#include "kldwrm/steps.hpp"

namespace kldwrm {

enum class Solver { kKfac, kSo, kQ, kQe };

Solver parse_solver(const std::string& name);
std::string solver_name(Solver s);
/// Decay used when the config leaves rho unset.
double default_rho(Solver s);

struct RunConfig {
  std::string solver = "kfac";
  std::optional<double> rho;
  double lambda = 100.0;
  double lambda_decay = 0.0;  // lambda_k = lambda / (1 + lambda_decay * k)
  double damping = 0.01;
  Index batch_size = 512;
  Index update_period = 30;
  double weight_decay = 0.001;
  std::string clip_mode = "auto";  // auto | none | global | per_group
  double clip_param = 0.1;
  double clip_tau = 2.0;
  Index epochs = 10;
  std::uint64_t seed = 0;
  std::string arch = "784-128-64-10";
  Index qe_n_is = 10;
  double qe_omega = 0.07;
  Index qe_n_cap = 4;
  double qe_zeta_scale = 1.0 / 330.0;
  std::string dataset = "mnist";  // mnist | synthetic
  std::string data_dir;           // empty: $KLDWRM_DATA_DIR, then data/mnist
  Index train_limit = 0;          // 0 keeps every training sample
  Index test_limit = 0;
  Index synth_train = 64;
  Index synth_test = 64;
  std::string out_dir = "runs";
  std::string run_name;  // empty: <solver>_seed<seed>
  bool zero_model_curvature = false;
  bool record_wall_time = false;

  /// Throws ConfigError on unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  /// Canonical key=value listing in key order; parse(to_text()) round-trips.
  std::string to_text() const;

  Solver solver_kind() const { return parse_solver(solver); }
  double effective_rho() const { return rho ? *rho : default_rho(solver_kind()); }
  ClipPolicy clip_policy() const;
  QEConfig qe() const;
  std::string name() const;
  std::string resolved_data_dir() const;
};

/// Every key accepted by RunConfig::set, in canonical order.
const std::vector<std::string>& config_keys();
/// Parses `key = value` lines; '#' starts a comment.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Hidden widths between input and output, e.g. "784-128-64-10".
std::vector<Index> parse_arch(const std::string& arch);

struct EpochRow {
  Index epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double wall_s = 0.0;
  double step_norm = 0.0;
};

struct RunMetrics {
  std::vector<EpochRow> rows;
  bool diverged = false;
  std::string divergence;  // "epoch E step K: reason"
};

inline constexpr const char* kCsvHeader = "epoch,train_loss,test_loss,test_acc,wall_s,step_norm";

void write_csv(std::ostream& out, const RunMetrics& m);
std::string to_csv(const RunMetrics& m);
RunMetrics parse_csv(const std::string& text);
RunMetrics read_csv(const std::string& path);

struct DataPair {
  Dataset train;
  Dataset test;
};

/// Loads MNIST or generates the synthetic set named by the config.
DataPair load_data(const RunConfig& cfg);

/// One seeded run on the given data. Divergence stops the run and is
/// recorded in the metrics rather than thrown.
RunMetrics run(const RunConfig& cfg, const DataPair& data);
/// Loads data, runs and writes <out_dir>/<name>.csv.
RunMetrics run(const RunConfig& cfg);

struct Thresholds {
  double acc_ge = 0.98;
  double acc_gt = 0.98;
  double acc_ge_high = 0.985;
  double loss_le = 0.25;
  double loss_le_low = 0.2;
};

struct SummaryTable {
  Index runs = 0;
  double mu_acc = 0.0;
  double sd_acc = 0.0;
  double mu_loss = 0.0;
  double sd_loss = 0.0;
  bool sd_undefined = false;  // single run: sd reported as 0
  Index n_acc_ge = 0;
  Index n_acc_gt = 0;
  Index n_acc_ge_high = 0;
  Index n_loss_le = 0;
  Index n_loss_le_low = 0;
};

/// Mean and sample sd of final-epoch test accuracy and loss; threshold counts
/// use each run's best epoch.
SummaryTable summarize(const std::vector<RunMetrics>& runs, const Thresholds& t = {});
std::string format_summary(const SummaryTable& s, const std::string& label);

/// Reference rows for the conv-net MNIST experiment (mean/sd test accuracy
/// over 10 runs of 50 epochs). Shown next to summaries, never asserted.
struct ReferenceRow {
  const char* solver;
  double mu_acc;
  double sd_acc;
};
inline constexpr ReferenceRow kReferenceRows[] = {
    {"kfac", 0.9619, 0.032},
    {"so", 0.9760, 0.0085},
    {"q", 0.9769, 0.0069},
    {"qe", 0.9773, 0.0063},
};

/// One panel per metric ("train_loss", "test_loss", "test_acc", "step_norm"),
/// one polyline per run in each.
std::string render_curves_svg(const std::vector<RunMetrics>& runs,
                              const std::vector<std::string>& metrics = {"test_acc",
                                                                         "test_loss"});
void render_curves(const std::vector<RunMetrics>& runs, const std::string& output_path,
                   const std::vector<std::string>& metrics = {"test_acc", "test_loss"});

}  // namespace kldwrm
