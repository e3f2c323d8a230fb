// Copyright 2026 The BOFL Authors
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


// Acceptance suite. Each criterion prints exactly one PASS/FAIL line; the
// process exits nonzero if any selected criterion fails. Pass criterion ids
// (A1 ... A8) as arguments to run a subset.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bofl/config.hpp"
#include "bofl/kernels.hpp"
#include "bofl/losses.hpp"
#include "bofl/schedules.hpp"
#include "bofl/stats.hpp"
#include "bofl/trainer.hpp"
#include "commands.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace bofl;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr std::array kAllKinds = {LossKind::SigmoidCE,          LossKind::Focal,
                                  LossKind::PenaltyReducedFocal, LossKind::ClassBalancedFocal,
                                  LossKind::ClassWiseFocal,      LossKind::BOFL};

const fs::path kConfigs = fs::path(BOFL_SOURCE_DIR) / "configs";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bofl_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int quiet_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  std::vector<std::string> argv = {"bofl"};
  argv.insert(argv.end(), args.begin(), args.end());
  const int code = cli::run(argv, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

// ---- A1 -------------------------------------------------------------------

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (auto kind : kAllKinds) {
    const auto r = gradcheck_suite(kind, 1, 100);
    ok = ok && r.passed && r.max_relative_error <= gradcheck_tolerance(kind);
    detail += fmt::format("{} {:.2e}/{:.0e}; ", to_string(kind), r.max_relative_error, r.tolerance);
  }
  const double t = seconds_since(t0);
  ok = ok && t < 10.0;
  return {ok, detail + fmt::format("{:.2f} s (limit 10 s)", t)};
}

// ---- A2 -------------------------------------------------------------------

ExperimentConfig load_config(const std::string& name) { return load_experiment_file(kConfigs / name); }

Verdict reduction_chain() {
  double worst = 0.0;
  for (uint64_t seed = 1; seed <= 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> k(1, 3), c(1, 5), hw(4, 16);
    const BatchShape s{k(rng), c(rng), hw(rng), hw(rng)};
    const auto b = random_batch(s, seed);
    LossConfig cfg;
    const std::vector<double> ones(s.classes, 1.0);
    const double base = penalty_reduced_focal(b, cfg).total;
    const double cw = class_wise_focal(b, ones, cfg).total;
    const double bb = bofl::bofl(b, ClassImageWeights(s.classes, s.images, 1.0), cfg).total;
    worst = std::max({worst, oracle::rel(cw, base), oracle::rel(bb, base), oracle::rel(bb, cw)});
  }

  // Whole trajectories: BOFL with re-weighting disabled against the baseline.
  ExperimentConfig base = load_config("baseline.yaml");
  ExperimentConfig bb = load_config("bofl.yaml");
  bb.train.weighting = WeightingSource::None;
  bb.train.schedule.eta = 1.0;
  const auto train_set = generate_dataset(base.dataset);
  const auto heldout = generate_dataset(base.heldout);
  const auto la = train(train_set, heldout, base.train);
  const auto lb = train(train_set, heldout, bb.train);
  double step_worst = la.steps.size() == lb.steps.size() ? 0.0 : INFINITY;
  for (size_t i = 0; i < std::min(la.steps.size(), lb.steps.size()); ++i) {
    step_worst = std::max(step_worst, std::fabs(la.steps[i].loss - lb.steps[i].loss));
  }
  const bool ok = worst <= 1e-12 && step_worst <= 1e-12;
  return {ok, fmt::format("batch rel {:.2e} (limit 1e-12), {} steps max |dloss| {:.2e} (limit 1e-12)", worst,
                          la.steps.size(), step_worst)};
}

// ---- A3 -------------------------------------------------------------------

Verdict directional_reproduction() {
  const auto t0 = Clock::now();
  const std::array<std::array<uint64_t, 3>, 3> triples = {{{7, 8, 11}, {17, 18, 21}, {27, 28, 31}}};
  const std::array<std::string, 4> names = {"baseline", "bofl", "wf_const", "wf_ls"};
  int bofl_wins = 0, ls_wins = 0;
  std::string rows;
  for (const auto& [ds_seed, ho_seed, train_seed] : triples) {
    std::map<std::string, double> min_recall;
    for (const auto& name : names) {
      ExperimentConfig c = load_config(name + ".yaml");
      c.dataset.seed = ds_seed;
      c.heldout.seed = ho_seed;
      c.heldout.feature_seed = ds_seed;
      c.train.seed = train_seed;
      const auto log = train(generate_dataset(c.dataset), generate_dataset(c.heldout), c.train);
      min_recall[name] = log.epochs.back().eval.min_class_recall;
    }
    const bool b = min_recall["bofl"] > min_recall["baseline"];
    const bool l = min_recall["wf_ls"] > min_recall["wf_const"];
    bofl_wins += b;
    ls_wins += l;
    rows += fmt::format("[{}] base {:.3f} bofl {:.3f} wf {:.3f} wf+ls {:.3f}; ", ds_seed, min_recall["baseline"],
                        min_recall["bofl"], min_recall["wf_const"], min_recall["wf_ls"]);
  }
  const double t = seconds_since(t0);
  const bool ok = bofl_wins >= 2 && ls_wins >= 2 && t < 300.0;
  return {ok, fmt::format("bofl > baseline {}/3, wf+ls > wf {}/3 (majority needed for both); {}{:.1f} s", bofl_wins,
                          ls_wins, rows, t)};
}

// ---- A4 -------------------------------------------------------------------

ClassStats stats_of(const std::vector<int64_t>& counts) {
  ClassStats s;
  for (size_t i = 0; i < counts.size(); ++i) {
    s.class_ids.push_back(static_cast<int64_t>(i + 1));
    s.names.push_back(fmt::format("c{}", i + 1));
    s.instance_counts.push_back(counts[i]);
    s.image_counts.push_back(counts[i]);
    s.total_instances += counts[i];
  }
  s.total_images = s.total_instances;
  return s;
}

Verdict weighting_identities() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int64_t> d(1, 100000);
  double identity = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<int64_t> counts(2 + t % 30);
    for (auto& c : counts) c = d(rng);
    const auto s = stats_of(counts);
    const auto w = inverse_frequency_alpha(s);
    long double sum = 0.0L;
    for (size_t i = 0; i < counts.size(); ++i) sum += static_cast<long double>(counts[i]) * w.alphas[i];
    identity = std::max(identity, oracle::rel(sum, static_cast<long double>(s.total_instances)));
  }
  bool ones = true;
  for (const auto& counts : {std::vector<int64_t>{1, 5, 1000}, std::vector<int64_t>{200, 200, 20, 20}}) {
    for (double a : effective_number_alpha(stats_of(counts), 0.0).alphas) ones = ones && a == 1.0;
  }
  const std::vector<double> betas = {0.9, 0.99, 0.999, 0.9999, 1.0 - 1e-6, 1.0 - 1e-8};
  double limit = 0.0;
  bool converging = true;
  for (const auto& counts : {std::vector<int64_t>{3, 1}, std::vector<int64_t>{200, 200, 20, 20}}) {
    const auto r = limit_consistency_check(stats_of(counts), betas, 1e-6);
    converging = converging && r.converging;
    limit = std::max(limit, r.rows.back().max_deviation);
  }
  const bool ok = identity <= 1e-9 && ones && converging && limit <= 1e-6;
  return {ok, fmt::format("sum n*alpha rel {:.1e} (limit 1e-9); beta=0 ones {}; max |ratio-1| at 1-1e-8 "
                          "{:.2e} (limit 1e-6), monotone {}",
                          identity, ones ? "yes" : "no", limit, converging ? "yes" : "no")};
}

// ---- A5 -------------------------------------------------------------------

struct TraceCsv {
  bool lambda_monotone = true;
  std::set<std::string> series;
  size_t rows = 0;
};

void scan_trace(const fs::path& path, TraceCsv& acc) {
  std::istringstream in(slurp(path));
  std::string line;
  std::getline(in, line);
  if (line != "iter,lr,lambda,class_id,alpha_hat,effective_step") acc.lambda_monotone = false;
  std::map<std::string, double> last_lambda;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::istringstream row(line);
    for (std::string x; std::getline(row, x, ',');) f.push_back(x);
    if (f.size() != 6) {
      acc.lambda_monotone = false;
      continue;
    }
    const std::string key = path.filename().string() + "#" + f[3];
    const double lambda = std::stod(f[2]);
    auto it = last_lambda.find(key);
    if (it != last_lambda.end() && lambda < it->second) acc.lambda_monotone = false;
    last_lambda[key] = lambda;
    acc.series.insert(key);
    ++acc.rows;
  }
}

size_t polylines(const std::string& svg) {
  size_t n = 0;
  for (size_t at = svg.find("<polyline"); at != std::string::npos; at = svg.find("<polyline", at + 1)) ++n;
  return n;
}

Verdict schedule_contracts() {
  ScheduleSpec lin;
  lin.rw_kind = ReweightKind::Linear;
  lin.total_epochs = 140;
  const bool endpoints = normalized_epoch(0, 0, 1, lin) == 0.0 && normalized_epoch(139, 0, 1, lin) == 1.0;
  bool start_one = true;
  for (double a : {0.0, 0.5, 2.0, 10.0})
    for (double in : {0.05, 1.0}) start_one = start_one && scheduled_alpha(a, 0.0, in) == 1.0;
  const double five = scheduled_alpha(2.0, 1.0, 0.05);
  ScheduleSpec cos = lin;
  cos.base_lr = 0.37;
  cos.warmup_iters = 100;
  const double final_lr = learning_rate(1399, 1400, cos);

  const auto dir = scratch("plots");
  const bool ran = quiet_cli({"plot", "--spec", (kConfigs / "fig1.yaml").string(), "--out", (dir / "fig1").string(),
                              "--figure", "fig1"}) == 0 &&
                   quiet_cli({"plot", "--spec", (kConfigs / "fig2.yaml").string(), "--out", (dir / "fig2").string(),
                              "--figure", "fig2"}) == 0;
  TraceCsv f1, f2;
  if (ran) {
    for (const char* f : {"trace_linear.csv", "trace_constant.csv"}) scan_trace(dir / "fig1" / f, f1);
    for (const char* f : {"trace_constant.csv", "trace_deferred.csv", "trace_linear.csv",
                          "trace_linear_after_deferred.csv"})
      scan_trace(dir / "fig2" / f, f2);
  }
  const size_t svg1 = ran ? polylines(slurp(dir / "fig1" / "fig1.svg")) : 0;
  const size_t svg2 = ran ? polylines(slurp(dir / "fig2" / "fig2.svg")) : 0;
  const bool ok = endpoints && start_one && std::fabs(five - 1.05) < 1e-15 && final_lr < 1e-6 * cos.base_lr &&
                  ran && f1.lambda_monotone && f2.lambda_monotone && f1.series.size() == 10 &&
                  f2.series.size() == 4 && svg1 == 10 && svg2 == 4;
  return {ok, fmt::format("linear endpoints {}; alpha_hat(lambda=0)=1 {}; intensity 5% -> {:.15g}; final lr "
                          "{:.1e} x base; fig1 {} series (svg {}), fig2 {} series (svg {}), lambda monotone {}",
                          endpoints ? "ok" : "bad", start_one ? "ok" : "bad", five, final_lr / cos.base_lr,
                          f1.series.size(), svg1, f2.series.size(), svg2,
                          f1.lambda_monotone && f2.lambda_monotone ? "yes" : "no")};
}

// ---- A6 -------------------------------------------------------------------

Verdict bias_prior() {
  const double bias = prior_bias(0.005);
  ExperimentConfig c = load_config("baseline.yaml");
  c.train.bias_prior_pi = 0.005;
  const auto ds = generate_dataset(c.dataset);
  const auto model = init_model(c.dataset, c.train);
  std::vector<size_t> all(ds.images.size());
  std::iota(all.begin(), all.end(), size_t{0});
  const auto p = build_batch(model, ds, all).probabilities();
  const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
  const bool ok = std::fabs(bias - -5.2933) <= 1e-4 && mean >= 0.004 && mean <= 0.006;
  return {ok, fmt::format("bias {:.6f} (target -5.2933 +- 1e-4); initial mean p {:.6f} over {} cells", bias, mean,
                          p.size())};
}

// ---- A7 -------------------------------------------------------------------

Verdict oracle_equivalence() {
  std::vector<kernels::SimdLevel> levels = {kernels::SimdLevel::Scalar};
  if (kernels::detected_level() != kernels::SimdLevel::Scalar) levels.push_back(kernels::detected_level());
  const auto original = kernels::active_level();
  double worst_total = 0.0, worst_grad = 0.0;
  size_t cases = 0;
  for (auto level : levels) {
    kernels::set_active_level(level);
    for (auto kind : kAllKinds) {
      for (uint64_t seed = 1; seed <= 12; ++seed) {
        std::mt19937_64 rng(seed * 131 + static_cast<uint64_t>(kind));
        std::uniform_int_distribution<size_t> k(1, 2), c(1, 5), hw(1, 16);
        BatchShape s{k(rng), c(rng), hw(rng), hw(rng)};
        if (seed == 1) s = {2, 5, 16, 16};
        const auto b = random_batch(s, seed, seed % 3 == 0 ? 12.0 : 4.0);
        const auto w = seeded_weights(kind, s, seed);
        LossConfig cfg;
        cfg.kind = kind;
        const auto got = compute_loss(b, w, cfg);
        const auto want = oracle::brute_force(b, w, cfg);
        worst_total = std::max(worst_total, oracle::rel(got.total, want.total));
        for (size_t i = 0; i < got.gradient.size(); ++i) {
          worst_grad = std::max(worst_grad, oracle::rel(got.gradient[i], want.gradient[i]));
        }
        ++cases;
      }
    }
  }
  kernels::set_active_level(original);
  std::string names;
  for (auto l : levels) names += std::string(names.empty() ? "" : "+") + std::string(kernels::to_string(l));
  const bool ok = worst_total <= 1e-9 && worst_grad <= 1e-9;
  return {ok, fmt::format("{} batches on {}: total rel {:.2e}, per-cell gradient rel {:.2e} (limit 1e-9)", cases,
                          names, worst_total, worst_grad)};
}

// ---- A8 -------------------------------------------------------------------

Verdict determinism() {
  const auto dir = scratch("determinism");
  bool ok = true;
  std::string detail;
  for (const char* cfg : {"baseline.yaml", "bofl.yaml"}) {
    const auto a = dir / (std::string(cfg) + ".a"), b = dir / (std::string(cfg) + ".b");
    const bool ran = quiet_cli({"train", "--config", (kConfigs / cfg).string(), "--out", a.string()}) == 0 &&
                     quiet_cli({"train", "--config", (kConfigs / cfg).string(), "--out", b.string()}) == 0;
    bool same = ran;
    for (const char* f : {"train_log.csv", "steps.csv", "weights.csv"}) {
      same = same && !slurp(a / f).empty() && slurp(a / f) == slurp(b / f);
    }
    ok = ok && same;
    detail += fmt::format("{} {}; ", cfg, same ? "identical" : "DIFFERENT");
  }
  return {ok, detail + "compared train_log.csv, steps.csv, weights.csv"};
}

}  // namespace

int main(int argc, char** argv) {
  setenv("BOFL_LOG_LEVEL", "warn", 0);
  cli::configure_logging();
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"A1 gradient correctness", gradient_correctness},
      {"A2 reduction chain", reduction_chain},
      {"A3 directional reproduction", directional_reproduction},
      {"A4 weighting identities", weighting_identities},
      {"A5 schedule contracts", schedule_contracts},
      {"A6 bias prior", bias_prior},
      {"A7 brute-force oracle equivalence", oracle_equivalence},
      {"A8 determinism", determinism},
  };
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) only.insert(argv[i]);
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.contains(name.substr(0, 2))) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
