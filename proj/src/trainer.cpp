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

#include "kldwrm/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "kldwrm/curvature.hpp"

namespace kldwrm {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  }
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': not an unsigned integer: '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': not a boolean: '" + v + "'");
}

struct KeyHandler {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
KeyHandler double_key(T RunConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) {
            c.*field = parse_double(k, v);
          },
          [field](const RunConfig& c) { return fmt(c.*field); }};
}

KeyHandler index_key(Index RunConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) {
            c.*field = static_cast<Index>(parse_int(k, v));
          },
          [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

KeyHandler string_key(std::string RunConfig::*field) {
  return {[field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; },
          [field](const RunConfig& c) { return c.*field; }};
}

KeyHandler bool_key(bool RunConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) {
            c.*field = parse_bool(k, v);
          },
          [field](const RunConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

const std::vector<std::pair<std::string, KeyHandler>>& handlers() {
  static const std::vector<std::pair<std::string, KeyHandler>> table = {
      {"solver", string_key(&RunConfig::solver)},
      {"rho",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "auto") {
            c.rho.reset();
          } else {
            c.rho = parse_double(k, v);
          }
        },
        [](const RunConfig& c) { return c.rho ? fmt(*c.rho) : std::string("auto"); }}},
      {"lambda", double_key(&RunConfig::lambda)},
      {"lambda_decay", double_key(&RunConfig::lambda_decay)},
      {"damping", double_key(&RunConfig::damping)},
      {"batch_size", index_key(&RunConfig::batch_size)},
      {"update_period", index_key(&RunConfig::update_period)},
      {"weight_decay", double_key(&RunConfig::weight_decay)},
      {"clip_mode", string_key(&RunConfig::clip_mode)},
      {"clip_param", double_key(&RunConfig::clip_param)},
      {"clip_tau", double_key(&RunConfig::clip_tau)},
      {"epochs", index_key(&RunConfig::epochs)},
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"arch", string_key(&RunConfig::arch)},
      {"qe_n_is", index_key(&RunConfig::qe_n_is)},
      {"qe_omega", double_key(&RunConfig::qe_omega)},
      {"qe_n_cap", index_key(&RunConfig::qe_n_cap)},
      {"qe_zeta_scale", double_key(&RunConfig::qe_zeta_scale)},
      {"dataset", string_key(&RunConfig::dataset)},
      {"data_dir", string_key(&RunConfig::data_dir)},
      {"train_limit", index_key(&RunConfig::train_limit)},
      {"test_limit", index_key(&RunConfig::test_limit)},
      {"synth_train", index_key(&RunConfig::synth_train)},
      {"synth_test", index_key(&RunConfig::synth_test)},
      {"out_dir", string_key(&RunConfig::out_dir)},
      {"run_name", string_key(&RunConfig::run_name)},
      {"zero_model_curvature", bool_key(&RunConfig::zero_model_curvature)},
      {"record_wall_time", bool_key(&RunConfig::record_wall_time)},
  };
  return table;
}

}  // namespace

Solver parse_solver(const std::string& name) {
  if (name == "kfac") return Solver::kKfac;
  if (name == "so") return Solver::kSo;
  if (name == "q") return Solver::kQ;
  if (name == "qe") return Solver::kQe;
  throw ConfigError("unknown solver '" + name + "' (expected kfac, so, q or qe)");
}

std::string solver_name(Solver s) {
  switch (s) {
    case Solver::kKfac: return "kfac";
    case Solver::kSo: return "so";
    case Solver::kQ: return "q";
    case Solver::kQe: return "qe";
  }
  return "?";
}

double default_rho(Solver s) {
  switch (s) {
    case Solver::kKfac: return 0.95;
    case Solver::kSo: return 0.33;
    case Solver::kQ: return 0.5;
    case Solver::kQe: return 0.5;
  }
  return 0.0;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, h] : handlers()) k.push_back(name);
    return k;
  }();
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [name, h] : handlers()) {
    if (name == key) {
      h.set(*this, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [name, h] : handlers()) os << name << " = " << h.get(*this) << "\n";
  return os.str();
}

void RunConfig::validate() const {
  const Solver s = solver_kind();
  const double r = effective_rho();
  if (!(r >= 0.0 && r < 1.0)) throw ConfigError("rho must lie in [0, 1)");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(lambda_decay >= 0.0)) throw ConfigError("lambda_decay must be nonnegative");
  if (!(damping >= 0.0)) throw ConfigError("damping must be nonnegative");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (update_period <= 0) throw ConfigError("update_period must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (train_limit < 0 || test_limit < 0) throw ConfigError("limits must be nonnegative");
  if (dataset != "mnist" && dataset != "synthetic") {
    throw ConfigError("dataset must be mnist or synthetic");
  }
  if (dataset == "synthetic" && (synth_train <= 0 || synth_test <= 0)) {
    throw ConfigError("synthetic set sizes must be positive");
  }
  clip_policy();
  parse_arch(arch);
  if (s == Solver::kQe) qe().validate();
}

ClipPolicy RunConfig::clip_policy() const {
  ClipPolicy p;
  p.clip_param = clip_param;
  p.tau = clip_tau;
  if (clip_mode == "none") {
    p.mode = ClipMode::kNone;
  } else if (clip_mode == "global") {
    p.mode = ClipMode::kGlobal;
  } else if (clip_mode == "per_group") {
    p.mode = ClipMode::kPerGroup;
  } else if (clip_mode == "auto") {
    const Solver s = solver_kind();
    p.mode = (s == Solver::kKfac || s == Solver::kSo) ? ClipMode::kGlobal : ClipMode::kPerGroup;
  } else {
    throw ConfigError("clip_mode must be auto, none, global or per_group");
  }
  if (p.mode == ClipMode::kGlobal && !(clip_param > 0.0)) {
    throw ConfigError("clip_param must be positive");
  }
  if (p.mode == ClipMode::kPerGroup && !(clip_tau > 0.0)) {
    throw ConfigError("clip_tau must be positive");
  }
  return p;
}

QEConfig RunConfig::qe() const {
  QEConfig q;
  q.n_is = qe_n_is;
  q.omega = qe_omega;
  q.n_cap = qe_n_cap;
  q.zeta_scale = qe_zeta_scale;
  return q;
}

std::string RunConfig::name() const {
  return run_name.empty() ? solver + "_seed" + std::to_string(seed) : run_name;
}

std::string RunConfig::resolved_data_dir() const {
  if (!data_dir.empty()) return data_dir;
  if (const char* env = std::getenv("KLDWRM_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return "data/mnist";
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<Index> parse_arch(const std::string& arch) {
  std::vector<Index> widths;
  std::stringstream ss(arch);
  std::string part;
  while (std::getline(ss, part, '-')) {
    const long long w = parse_int("arch", trim(part));
    if (w <= 0) throw ConfigError("arch widths must be positive");
    widths.push_back(static_cast<Index>(w));
  }
  if (widths.size() < 2) throw ConfigError("arch needs at least input and output widths");
  return widths;
}

// ---------------------------------------------------------------------------
// CSV

void write_csv(std::ostream& out, const RunMetrics& m) {
  out << kCsvHeader << "\n";
  for (const EpochRow& r : m.rows) {
    out << r.epoch << "," << fmt(r.train_loss) << "," << fmt(r.test_loss) << ","
        << fmt(r.test_acc) << "," << fmt(r.wall_s) << "," << fmt(r.step_norm) << "\n";
  }
  if (m.diverged) out << "# diverged at " << m.divergence << "\n";
}

std::string to_csv(const RunMetrics& m) {
  std::ostringstream os;
  write_csv(os, m);
  return os.str();
}

RunMetrics parse_csv(const std::string& text) {
  RunMetrics m;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kCsvHeader) {
    throw FormatError("metrics CSV: unexpected header");
  }
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("# diverged at ", 0) == 0) {
      m.diverged = true;
      m.divergence = line.substr(14);
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw FormatError("metrics CSV: expected 6 columns: " + line);
    EpochRow r;
    r.epoch = static_cast<Index>(parse_int("epoch", cells[0]));
    r.train_loss = parse_double("train_loss", cells[1]);
    r.test_loss = parse_double("test_loss", cells[2]);
    r.test_acc = parse_double("test_acc", cells[3]);
    r.wall_s = parse_double("wall_s", cells[4]);
    r.step_norm = parse_double("step_norm", cells[5]);
    if (!m.rows.empty() && r.epoch <= m.rows.back().epoch) {
      throw FormatError("metrics CSV: epochs must increase");
    }
    m.rows.push_back(r);
  }
  return m;
}

RunMetrics read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

// ---------------------------------------------------------------------------
// Runs

namespace {

Dataset truncate(Dataset ds, Index limit) {
  if (limit <= 0 || limit >= ds.size()) return ds;
  ds.inputs = ds.inputs.leftCols(limit).eval();
  if (ds.kind == DatasetKind::kClassification) {
    ds.classes.resize(static_cast<std::size_t>(limit));
  } else {
    ds.targets = ds.targets.leftCols(limit).eval();
  }
  return ds;
}

struct Eval {
  double loss = 0.0;
  double acc = 0.0;
};

Eval evaluate(const Network& net, const NetParams& params, const Dataset& ds) {
  constexpr Index kChunk = 2000;
  const LossKind kind = net.loss_kind();
  double loss_sum = 0.0;
  double hits = 0.0;
  for (Index b = 0; b < ds.size(); b += kChunk) {
    const Index n = std::min(kChunk, ds.size() - b);
    const auto [x, t] = ds.slice(b, n);
    const Matrix out = forward(net, params, x).outputs;
    loss_sum += mean_loss(out, t, kind) * static_cast<double>(n);
    if (kind == LossKind::kCrossEntropy) hits += accuracy(out, t.classes) * static_cast<double>(n);
  }
  const double N = static_cast<double>(ds.size());
  return {loss_sum / N, hits / N};
}

}  // namespace

DataPair load_data(const RunConfig& cfg) {
  const std::vector<Index> widths = parse_arch(cfg.arch);
  DataPair d;
  if (cfg.dataset == "synthetic") {
    Dataset all = synth_classification(cfg.synth_train + cfg.synth_test, widths.front(),
                                       widths.back(), 0x5eed0000u + cfg.seed);
    std::vector<Index> tr(static_cast<std::size_t>(cfg.synth_train));
    std::vector<Index> te(static_cast<std::size_t>(cfg.synth_test));
    for (Index i = 0; i < cfg.synth_train; ++i) tr[static_cast<std::size_t>(i)] = i;
    for (Index i = 0; i < cfg.synth_test; ++i) te[static_cast<std::size_t>(i)] = cfg.synth_train + i;
    for (auto [idx, dst] : {std::pair{&tr, &d.train}, std::pair{&te, &d.test}}) {
      auto [x, t] = all.gather(*idx);
      dst->inputs = std::move(x);
      dst->classes = std::move(t.classes);
      dst->kind = DatasetKind::kClassification;
      dst->num_classes = all.num_classes;
    }
    return d;
  }
  const std::filesystem::path dir = cfg.resolved_data_dir();
  d.train = truncate(load_idx((dir / "train-images-idx3-ubyte").string(),
                              (dir / "train-labels-idx1-ubyte").string()),
                     cfg.train_limit);
  d.test = truncate(load_idx((dir / "t10k-images-idx3-ubyte").string(),
                             (dir / "t10k-labels-idx1-ubyte").string()),
                    cfg.test_limit);
  return d;
}

RunMetrics run(const RunConfig& cfg, const DataPair& data) {
  cfg.validate();
  const Solver solver = cfg.solver_kind();
  const double rho = cfg.effective_rho();
  const Network net = make_mlp(parse_arch(cfg.arch), data.train.kind == DatasetKind::kClassification
                                                         ? LossKind::kCrossEntropy
                                                         : LossKind::kGaussian);
  if (data.train.input_dim() != net.input_dim()) {
    throw ConfigError("arch input width does not match the dataset");
  }
  const LossKind kind = net.loss_kind();
  const ClipPolicy clip = cfg.clip_policy();
  const QEConfig qe_cfg = cfg.qe();
  const std::vector<Index> groups = layer_offsets(net);

  // Single stream: initialization first, then label sampling at refreshes.
  std::mt19937_64 rng(cfg.seed);
  NetParams params = init_params(net, rng);
  Vector theta = flatten(params);

  KroneckerCurvature curv(net, rho, cfg.damping);
  curv.set_zero_model_curvature(cfg.zero_model_curvature);
  StepState state(net.param_count(), rho);
  SnapshotRing ring(qe_cfg.n_cap);
  NetParams epoch_start;
  Index curv_epoch = -1;

  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&]() -> double {
    if (!cfg.record_wall_time) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  RunMetrics m;
  {
    const Eval tr = evaluate(net, params, data.train);
    const Eval te = evaluate(net, params, data.test);
    m.rows.push_back({0, tr.loss, te.loss, te.acc, wall(), 0.0});
  }

  const BatchPlan plan{cfg.batch_size, cfg.seed};
  Index k = 0;
  Index epoch = 1;
  const auto diverge = [&](const std::exception& e) {
    m.diverged = true;
    m.divergence = "epoch " + std::to_string(epoch) + " step " + std::to_string(k) + ": " +
                   e.what();
  };
  for (; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    double norm_sum = 0.0;
    Index steps = 0;
    try {
      for (const std::vector<Index>& idx : batches(data.train, plan, epoch)) {
        const auto [x, t] = data.train.gather(idx);
        const LossGrad lg = loss_grad(net, params, x, t, kind);
        if (should_refresh(k, cfg.update_period)) {
          curv.refresh(sampled_factors(net, params, lg.cache, rng));
          ++curv_epoch;
          if (solver == Solver::kQe) {
            if (curv_epoch >= 1) ring.push(epoch_start, curv_epoch - 1);
            epoch_start = snapshot(params);
          }
        }
        const double lam = cfg.lambda / (1.0 + cfg.lambda_decay * static_cast<double>(k));
        Vector s;
        switch (solver) {
          case Solver::kKfac:
            s = woqm_step(curv, lg.grad, lam);
            break;
          case Solver::kSo:
            s = so_step(curv, lg.grad, state, lam);
            break;
          case Solver::kQ:
            s = q_step_variable_lambda(curv, lg.grad, state, lam);
            break;
          case Solver::kQe: {
            const QEProblem problem = make_qe_problem(
                net, params, x, lg.grad,
                [&curv](const Vector& v) { return curv.apply_model_curvature(v); }, ring,
                curv_epoch, lam, rho, qe_cfg);
            s = qe_step(curv, problem, state, lam, qe_cfg);
            break;
          }
        }
        s = clip_step(s, clip, groups);
        theta = theta + s - (cfg.weight_decay / lam) * theta;
        if (!theta.allFinite()) throw NumericError("parameters became non-finite");
        params = unflatten(net, theta);
        loss_sum += lg.loss;
        norm_sum += s.norm();
        ++steps;
        ++k;
      }
    } catch (const NumericError& e) {
      diverge(e);
      break;
    } catch (const SingularityError& e) {
      diverge(e);
      break;
    }
    const Eval te = evaluate(net, params, data.test);
    const double n = static_cast<double>(std::max<Index>(steps, 1));
    m.rows.push_back({epoch, loss_sum / n, te.loss, te.acc, wall(), norm_sum / n});
  }
  return m;
}

RunMetrics run(const RunConfig& cfg) {
  cfg.validate();
  const DataPair data = load_data(cfg);
  RunMetrics m = run(cfg, data);
  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path path = std::filesystem::path(cfg.out_dir) / (cfg.name() + ".csv");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_csv(out, m);
  return m;
}

// ---------------------------------------------------------------------------
// Summaries

SummaryTable summarize(const std::vector<RunMetrics>& runs, const Thresholds& t) {
  if (runs.empty()) throw ConfigError("summarize: no runs");
  for (const RunMetrics& r : runs) {
    if (r.rows.empty()) throw ConfigError("summarize: run without rows");
    if (r.rows.back().epoch != runs.front().rows.back().epoch) {
      throw ConfigError("summarize: runs end at different epochs");
    }
  }
  SummaryTable s;
  s.runs = static_cast<Index>(runs.size());
  const double n = static_cast<double>(runs.size());
  for (const RunMetrics& r : runs) {
    s.mu_acc += r.rows.back().test_acc / n;
    s.mu_loss += r.rows.back().test_loss / n;
  }
  if (runs.size() > 1) {
    double va = 0.0;
    double vl = 0.0;
    for (const RunMetrics& r : runs) {
      va += std::pow(r.rows.back().test_acc - s.mu_acc, 2);
      vl += std::pow(r.rows.back().test_loss - s.mu_loss, 2);
    }
    s.sd_acc = std::sqrt(va / (n - 1.0));
    s.sd_loss = std::sqrt(vl / (n - 1.0));
  } else {
    s.sd_undefined = true;
  }
  for (const RunMetrics& r : runs) {
    double best_acc = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (const EpochRow& row : r.rows) {
      best_acc = std::max(best_acc, row.test_acc);
      best_loss = std::min(best_loss, row.test_loss);
    }
    s.n_acc_ge += best_acc >= t.acc_ge;
    s.n_acc_gt += best_acc > t.acc_gt;
    s.n_acc_ge_high += best_acc >= t.acc_ge_high;
    s.n_loss_le += best_loss <= t.loss_le;
    s.n_loss_le_low += best_loss <= t.loss_le_low;
  }
  return s;
}

std::string format_summary(const SummaryTable& s, const std::string& label) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "solver      runs  N(acc>=98%)  N(acc>98%)  N(acc>=98.5%)  N(loss<=0.25)  N(loss<=0.2)"
        "  mu_acc   sd_acc   mu_loss  sd_loss\n";
  os << label;
  for (std::size_t i = label.size(); i < 12; ++i) os << ' ';
  os << s.runs << "     " << s.n_acc_ge << "            " << s.n_acc_gt << "           "
     << s.n_acc_ge_high << "              " << s.n_loss_le << "              "
     << s.n_loss_le_low << "             " << 100.0 * s.mu_acc << "%  " << 100.0 * s.sd_acc
     << "%" << (s.sd_undefined ? "*" : "") << "  ";
  os.precision(4);
  os << s.mu_loss << "   " << s.sd_loss << (s.sd_undefined ? "*" : "") << "\n";
  if (s.sd_undefined) os << "* single run: standard deviation undefined, reported as 0\n";
  for (const ReferenceRow& ref : kReferenceRows) {
    if (label == ref.solver) {
      os.precision(2);
      os << "reference (conv net, 10 runs x 50 epochs): mu_acc " << 100.0 * ref.mu_acc
         << "%  sd_acc " << 100.0 * ref.sd_acc << "%\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// SVG

namespace {

double metric_value(const EpochRow& r, const std::string& metric) {
  if (metric == "train_loss") return r.train_loss;
  if (metric == "test_loss") return r.test_loss;
  if (metric == "test_acc") return r.test_acc;
  if (metric == "step_norm") return r.step_norm;
  throw ConfigError("unknown metric '" + metric + "'");
}

}  // namespace

std::string render_curves_svg(const std::vector<RunMetrics>& runs,
                              const std::vector<std::string>& metrics) {
  if (runs.empty()) throw ConfigError("render_curves: no runs");
  if (metrics.empty()) throw ConfigError("render_curves: no metrics");
  constexpr double kW = 480.0, kH = 320.0, kPad = 48.0;
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kW * metrics.size())
     << "\" height=\"" << fmt(kH) << "\" viewBox=\"0 0 " << fmt(kW * metrics.size()) << " "
     << fmt(kH) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t p = 0; p < metrics.size(); ++p) {
    const std::string& metric = metrics[p];
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const RunMetrics& r : runs) {
      if (r.rows.empty()) throw ConfigError("render_curves: run without rows");
      for (const EpochRow& row : r.rows) {
        const double y = metric_value(row, metric);
        xmin = std::min(xmin, static_cast<double>(row.epoch));
        xmax = std::max(xmax, static_cast<double>(row.epoch));
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
    const double xspan = xmax > xmin ? xmax - xmin : 1.0;
    const double yspan = ymax > ymin ? ymax - ymin : 1.0;
    const double ox = kW * static_cast<double>(p);
    auto px = [&](double x) { return ox + kPad + (x - xmin) / xspan * (kW - 2 * kPad); };
    auto py = [&](double y) { return kH - kPad - (y - ymin) / yspan * (kH - 2 * kPad); };

    os << "<g class=\"panel\" data-metric=\"" << metric << "\" data-xmin=\"" << fmt(xmin)
       << "\" data-xmax=\"" << fmt(xmax) << "\" data-ymin=\"" << fmt(ymin) << "\" data-ymax=\""
       << fmt(ymax) << "\">\n";
    os << "<rect x=\"" << fmt(ox + kPad) << "\" y=\"" << fmt(kPad) << "\" width=\""
       << fmt(kW - 2 * kPad) << "\" height=\"" << fmt(kH - 2 * kPad)
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << fmt(ox + kW / 2) << "\" y=\"" << fmt(kPad / 2)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" << metric
       << "</text>\n";
    os << "<text x=\"" << fmt(ox + kPad - 4) << "\" y=\"" << fmt(py(ymin))
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(ymin)
       << "</text>\n";
    os << "<text x=\"" << fmt(ox + kPad - 4) << "\" y=\"" << fmt(py(ymax))
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(ymax)
       << "</text>\n";
    os << "<text x=\"" << fmt(px(xmin)) << "\" y=\"" << fmt(kH - kPad + 14)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(xmin)
       << "</text>\n";
    os << "<text x=\"" << fmt(px(xmax)) << "\" y=\"" << fmt(kH - kPad + 14)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(xmax)
       << "</text>\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
      os << "<polyline fill=\"none\" stroke=\"" << kColors[i % 10] << "\" points=\"";
      const auto& rows = runs[i].rows;
      for (std::size_t j = 0; j < rows.size(); ++j) {
        if (j > 0) os << ' ';
        os << fmt(px(static_cast<double>(rows[j].epoch))) << ','
           << fmt(py(metric_value(rows[j], metric)));
      }
      if (rows.size() == 1) {
        os << ' ' << fmt(px(static_cast<double>(rows[0].epoch))) << ','
           << fmt(py(metric_value(rows[0], metric)));
      }
      os << "\"/>\n";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void render_curves(const std::vector<RunMetrics>& runs, const std::string& output_path,
                   const std::vector<std::string>& metrics) {
  const std::string svg = render_curves_svg(runs, metrics);
  std::ofstream out(output_path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + output_path);
  out << svg;
}

}  // namespace kldwrm
