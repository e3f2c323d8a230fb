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

#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "bofl/config.hpp"
#include "bofl/error.hpp"
#include "bofl/eval.hpp"
#include "bofl/kernels.hpp"
#include "bofl/losses.hpp"
#include "bofl/schedules.hpp"
#include "bofl/stats.hpp"
#include "bofl/svg.hpp"
#include "bofl/synth.hpp"
#include "bofl/trainer.hpp"

namespace bofl::cli {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using nlohmann::json;

namespace {

// Collects what a command wrote and emits manifest.json next to it.
class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args)
      : started_(Clock::now()), started_wall_(std::time(nullptr)) {
    doc_["tool"] = "bofl";
    doc_["tool_version"] = kToolVersion;
    doc_["command"] = std::move(command);
    doc_["argv"] = args;
    doc_["simd"] = std::string(kernels::to_string(kernels::active_level()));
    doc_["artifacts"] = json::array();
  }

  json& doc() { return doc_; }

  void artifact(const fs::path& dir, const fs::path& file, std::string_view kind) {
    doc_["artifacts"].push_back(
        {{"path", fs::relative(file, dir).generic_string()}, {"kind", std::string(kind)}});
  }

  void write(const fs::path& path) {
    doc_["wall_clock"] = {
        {"started_unix", static_cast<int64_t>(started_wall_)},
        {"duration_seconds",
         std::chrono::duration<double>(Clock::now() - started_).count()}};
    std::ofstream out(path, std::ios::binary);
    out << doc_.dump(2) << '\n';
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  }

 private:
  json doc_;
  Clock::time_point started_;
  std::time_t started_wall_;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  return out;
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  auto out = open_out(path);
  fn(out);
  out.flush();
  if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(fmt::format("cannot create directory '{}': {}", dir.string(), ec.message()));
}

// ---- stats ----------------------------------------------------------------

struct StatsArgs {
  std::string annotations;
  double beta = 0.999;
  std::optional<double> tail_ratio;
  std::string out = "stats.csv";
};

int cmd_stats(const StatsArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  if (!(a.beta >= 0.0 && a.beta < 1.0)) throw ArgumentError("--beta must lie in [0, 1)");
  const ClassStats stats = ingest_annotations_file(a.annotations);
  Manifest manifest("stats", argv);

  const fs::path csv = a.out;
  if (csv.has_parent_path()) make_dir(csv.parent_path());
  write_file(csv, [&](std::ostream& o) { write_stats_csv(o, stats, a.beta); });

  out << fmt::format("classes: {}\ninstances: {}\nimages: {}\n", stats.num_classes(),
                     stats.total_instances, stats.total_images);
  const bool any_zero = std::find(stats.instance_counts.begin(), stats.instance_counts.end(), 0) !=
                        stats.instance_counts.end();
  if (stats.total_instances > 0) {
    const auto inv = inverse_frequency_alpha(stats);
    const auto [lo, hi] = std::minmax_element(inv.alphas.begin(), inv.alphas.end());
    out << fmt::format("alpha_invfreq: min {:.6g} max {:.6g}\n", *lo, *hi);
    if (!inv.capped_classes.empty()) {
      out << fmt::format("alpha_invfreq: {} zero-count class(es) capped\n", inv.capped_classes.size());
    }
  }
  if (!any_zero) {
    const auto eff = effective_number_alpha(stats, a.beta);
    const auto [lo, hi] = std::minmax_element(eff.alphas.begin(), eff.alphas.end());
    out << fmt::format("alpha_effnum(beta={}): min {:.6g} max {:.6g}\n", a.beta, *lo, *hi);
  } else {
    out << "alpha_effnum: undefined (zero-count classes present)\n";
  }
  json split_json = nullptr;
  if (a.tail_ratio) {
    const auto split = split_head_tail(stats, *a.tail_ratio);
    auto ids = [](const std::set<int64_t>& s) {
      std::string t;
      for (int64_t id : s) t += (t.empty() ? "" : " ") + std::to_string(id);
      return t;
    };
    out << fmt::format("tail_ratio {}: head {} [{}], tail {} [{}]\n", *a.tail_ratio, split.head.size(),
                       ids(split.head), split.tail.size(), ids(split.tail));
    split_json = {{"tail_ratio", *a.tail_ratio},
                  {"head", std::vector<int64_t>(split.head.begin(), split.head.end())},
                  {"tail", std::vector<int64_t>(split.tail.begin(), split.tail.end())}};
  }

  const fs::path dir = csv.has_parent_path() ? csv.parent_path() : fs::path(".");
  manifest.doc()["inputs"] = {{"annotations", a.annotations}, {"beta", a.beta}};
  manifest.doc()["split"] = split_json;
  manifest.artifact(dir, csv, "stats_csv");
  manifest.write(fs::path(csv.string() + ".manifest.json"));
  spdlog::info("wrote {}", csv.string());
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct RunOutputs {
  TrainLog log;
  std::vector<fs::path> files;
};

RunOutputs train_one(const ExperimentConfig& cfg, const fs::path& dir, bool save_dataset) {
  make_dir(dir);
  const SynthDataset train_set = generate_dataset(cfg.dataset);
  const SynthDataset heldout = generate_dataset(cfg.heldout);
  spdlog::debug("[{}] {} training objects, {} held-out objects", cfg.label, train_set.total_objects(),
                heldout.total_objects());
  RunOutputs r;
  r.log = train(train_set, heldout, cfg.train);
  r.log.label = cfg.label;

  auto emit = [&](const std::string& name, auto&& fn) {
    const fs::path p = dir / name;
    write_file(p, fn);
    r.files.push_back(p);
  };
  emit("train_log.csv", [&](std::ostream& o) { write_epoch_csv(o, r.log); });
  emit("steps.csv", [&](std::ostream& o) { write_steps_csv(o, r.log); });
  emit("weights.csv", [&](std::ostream& o) { write_weights_csv(o, r.log); });
  write_model(dir / "model.bin", r.log.model);
  r.files.push_back(dir / "model.bin");
  if (save_dataset) {
    emit("annotations.json", [&](std::ostream& o) { o << to_annotation_json(train_set).dump() << '\n'; });
    write_dataset_tensors(train_set, dir / "features.bin", dir / "heatmaps.bin");
    r.files.push_back(dir / "features.bin");
    r.files.push_back(dir / "heatmaps.bin");
  }
  return r;
}

std::string recall_line(const EvalReport& e) {
  std::string s;
  for (double v : e.per_class_recall) s += fmt::format("{}{:.4f}", s.empty() ? "" : " ", v);
  return s;
}

int cmd_train(const std::string& config_path, const fs::path& out_dir, bool save_dataset,
              const std::vector<std::string>& argv, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment_file(config_path);
  Manifest manifest("train", argv);
  manifest.doc()["config"] = to_json(cfg);
  manifest.doc()["seeds"] = {{"dataset", cfg.dataset.seed}, {"heldout", cfg.heldout.seed},
                             {"train", cfg.train.seed}};
  const auto t0 = Clock::now();
  auto r = train_one(cfg, out_dir, save_dataset);
  for (const auto& f : r.files) manifest.artifact(out_dir, f, f.extension().string().substr(1));

  const auto& last = r.log.epochs.back();
  out << fmt::format("run {}: {} epochs, final loss {:.6g}\n", cfg.label, r.log.epochs.size(), last.loss);
  out << fmt::format("per-class recall: {}\n", recall_line(last.eval));
  out << fmt::format("macro_recall {:.4f}  min_class_recall {:.4f}\n", last.eval.macro_recall,
                     last.eval.min_class_recall);
  if (last.eval.has_head_tail) out << fmt::format("head_tail_gap {:.4f}\n", last.eval.head_tail_gap);
  spdlog::info("trained '{}' in {:.2f} s", cfg.label,
               std::chrono::duration<double>(Clock::now() - t0).count());
  manifest.write(out_dir / "manifest.json");
  return kExitOk;
}

// ---- sweep ----------------------------------------------------------------

std::string dir_name(size_t index, const std::string& label) {
  std::string s;
  for (char c : label) {
    s += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  }
  return fmt::format("{:03d}_{}", index, s);
}

int cmd_sweep(const std::string& config_path, const fs::path& out_dir, int jobs,
              const std::vector<std::string>& argv, std::ostream& out) {
  if (jobs < 1) throw ArgumentError("--jobs must be >= 1");
  const SweepPlan plan = load_sweep_file(config_path);
  const std::vector<SweepRun> runs = plan.expand();
  for (size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].config.dataset.seed != runs[0].config.dataset.seed) {
      throw ValidationError({fmt::format("run '{}' changes the dataset seed; sweeps share one dataset",
                                         runs[i].label)});
    }
  }
  make_dir(out_dir);
  Manifest manifest("sweep", argv);
  spdlog::info("sweep: {} run(s), {} job(s)", runs.size(), jobs);

  std::vector<std::optional<RunOutputs>> results(runs.size());
  std::vector<std::exception_ptr> failures(runs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i; (i = next.fetch_add(1)) < runs.size();) {
      try {
        results[i] = train_one(runs[i].config, out_dir / dir_name(i, runs[i].label), false);
        spdlog::info("sweep: finished '{}'", runs[i].label);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const int n_threads = std::min<int>(jobs, static_cast<int>(runs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (size_t i = 0; i < runs.size(); ++i) {
    if (failures[i]) {
      spdlog::error("sweep: run '{}' failed", runs[i].label);
      std::rethrow_exception(failures[i]);
    }
  }

  std::vector<RunSummary> summaries;
  json run_docs = json::array();
  for (size_t i = 0; i < runs.size(); ++i) {
    summaries.push_back(results[i]->log.summary());
    json files = json::array();
    for (const auto& f : results[i]->files) files.push_back(fs::relative(f, out_dir).generic_string());
    run_docs.push_back({{"label", runs[i].label}, {"config", to_json(runs[i].config)}, {"artifacts", files}});
  }
  const AblationTable table = compare_runs(summaries);
  write_file(out_dir / "ablation.csv", [&](std::ostream& o) { table.write_csv(o); });
  const std::string text = table.render_text();
  write_file(out_dir / "ablation.txt", [&](std::ostream& o) { o << text; });
  out << text;

  manifest.doc()["runs"] = run_docs;
  manifest.doc()["grid"] = {{"size", runs.size()}, {"max_runs", plan.max_runs}};
  manifest.doc()["seeds"] = {{"dataset", runs[0].config.dataset.seed}};
  manifest.artifact(out_dir, out_dir / "ablation.csv", "csv");
  manifest.artifact(out_dir, out_dir / "ablation.txt", "txt");
  manifest.write(out_dir / "manifest.json");
  return kExitOk;
}

// ---- plot -----------------------------------------------------------------

struct PlotCase {
  std::string name;  // file suffix
  ScheduleSpec schedule;
  std::vector<double> alphas;
  bool dashed = false;
};

void write_trace_csv(std::ostream& o, const EffectiveStepTrace& trace) {
  o << "iter,lr,lambda,class_id,alpha_hat,effective_step\n";
  for (size_t t = 0; t < trace.points.size(); ++t) {
    const auto& pt = trace.points[t];
    for (size_t i = 0; i < trace.alpha_hat.size(); ++i) {
      o << pt.iter << ',' << fmt::format("{:.12g}", pt.lr) << ',' << fmt::format("{:.12g}", pt.lambda)
        << ',' << i << ',' << fmt::format("{:.12g}", trace.alpha_hat[i][t]) << ','
        << fmt::format("{:.12g}", trace.step[i][t]) << '\n';
    }
  }
}

int cmd_plot(const std::string& spec_path, const fs::path& out_dir, const std::string& figure,
             const std::vector<std::string>& argv, std::ostream& out) {
  const PlotSpec spec = load_plot_spec_file(spec_path);
  std::vector<PlotCase> cases;
  std::string title;
  if (figure == "fig1") {
    title = "Effective step size with and without linear scheduling";
    ScheduleSpec ls = spec.schedule, cst = spec.schedule;
    ls.rw_kind = ReweightKind::Linear;
    cst.rw_kind = ReweightKind::Constant;
    const std::vector<double> alphas = {2.0, 1.5, 1.0, 0.5, 0.0};
    cases = {{"linear", ls, alphas, false}, {"constant", cst, alphas, true}};
  } else if (figure == "fig2") {
    title = "Re-weighting schedules for a weighting factor of 2";
    for (auto k : {ReweightKind::Constant, ReweightKind::Deferred, ReweightKind::Linear,
                   ReweightKind::LinearAfterDeferred}) {
      ScheduleSpec s = spec.schedule;
      s.rw_kind = k;
      cases.push_back({std::string(to_string(k)), s, {2.0}, false});
    }
  } else {
    title = "Effective step size";
    cases = {{"", spec.schedule, spec.alphas, false}};
  }
  for (auto& c : cases) c.schedule.validate();

  make_dir(out_dir);
  Manifest manifest("plot", argv);
  manifest.doc()["figure"] = figure;
  manifest.doc()["spec"] = to_json(spec);

  LineChart chart;
  chart.title = title;
  chart.x_label = "iteration";
  chart.y_label = "learning rate x weighting factor";
  chart.comment = fmt::format("bofl {} plot --figure {}; see manifest.json", kToolVersion, figure);
  const int total_iters = spec.schedule.total_epochs * spec.steps_per_epoch;
  for (const auto& c : cases) {
    const auto trace = effective_step_trace(c.alphas, c.schedule, total_iters);
    const fs::path csv = out_dir / (c.name.empty() ? "trace.csv" : "trace_" + c.name + ".csv");
    write_file(csv, [&](std::ostream& o) { write_trace_csv(o, trace); });
    manifest.artifact(out_dir, csv, "trace_csv");
    for (size_t i = 0; i < c.alphas.size(); ++i) {
      LineSeries s;
      s.name = figure == "fig2"     ? std::string(to_string(c.schedule.rw_kind))
               : figure == "fig1"   ? fmt::format("a={} {}", c.alphas[i], c.name == "linear" ? "LS" : "const")
                                    : fmt::format("a={}", c.alphas[i]);
      s.dashed = c.dashed;
      for (const auto& pt : trace.points) s.x.push_back(pt.iter);
      s.y = trace.step[i];
      chart.series.push_back(std::move(s));
    }
  }
  const fs::path svg = out_dir / (figure + ".svg");
  write_file(svg, [&](std::ostream& o) { o << chart.render(); });
  manifest.artifact(out_dir, svg, "svg");
  manifest.doc()["series"] = chart.series.size();
  manifest.write(out_dir / "manifest.json");
  out << fmt::format("{}: {} series over {} iterations -> {}\n", figure, chart.series.size(), total_iters,
                     svg.string());
  return kExitOk;
}

// ---- gradcheck ------------------------------------------------------------

int cmd_gradcheck(const std::string& kind_name, uint64_t seed, int trials, std::optional<double> h,
                  bool corrupt, std::ostream& out) {
  const auto kind = parse_loss_kind(kind_name);
  if (!kind) throw ArgumentError(fmt::format("unknown loss kind '{}'", kind_name));
  std::function<void(std::vector<double>&)> tamper;
  if (corrupt) {
    // Negative control: perturb one analytic entry.
    tamper = [](std::vector<double>& g) { g[g.size() / 2] += 0.1 + std::abs(g[g.size() / 2]); };
  }
  const auto r = gradcheck_suite(*kind, seed, trials, h, tamper);
  out << fmt::format("{} {}: max relative error {:.3e} (tolerance {:.0e}, {} trial(s), h = {:g}, worst seed {})\n",
                     r.passed ? "PASS" : "FAIL", to_string(r.kind), r.max_relative_error, r.tolerance,
                     r.trials, r.perturbation, r.worst_seed);
  return r.passed ? kExitOk : kExitRuntime;
}

}  // namespace

void configure_logging() {
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("BOFL_LOG_LEVEL")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept "off" when asked for.
    if (level != spdlog::level::off || std::string_view(env) == "off") {
      spdlog::set_level(level);
    } else {
      spdlog::warn("ignoring unknown BOFL_LOG_LEVEL '{}'", env);
    }
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Balance-oriented focal loss toolkit", "bofl"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  StatsArgs stats;
  auto* s = app.add_subcommand("stats", "Per-class statistics and weighting factors of an annotation file");
  s->add_option("--annotations", stats.annotations, "Annotation JSON")->required();
  s->add_option("--beta", stats.beta, "Effective-number beta");
  s->add_option("--tail-ratio", stats.tail_ratio, "Image-frequency threshold for the head/tail split");
  s->add_option("--out", stats.out, "Output CSV path");

  std::string config, out_dir;
  bool save_dataset = false;
  auto* t = app.add_subcommand("train", "Train the toy detector from a config file");
  t->add_option("--config", config, "Experiment YAML")->required();
  t->add_option("--out", out_dir, "Output directory")->required();
  t->add_flag("--save-dataset", save_dataset, "Also write the training annotations and tensors");

  int jobs = 1;
  auto* w = app.add_subcommand("sweep", "Run every grid point of a sweep config");
  w->add_option("--config", config, "Sweep YAML")->required();
  w->add_option("--out", out_dir, "Output directory")->required();
  w->add_option("--jobs", jobs, "Runs trained concurrently");

  std::string spec, figure;
  auto* p = app.add_subcommand("plot", "Effective step-size traces as CSV and SVG");
  p->add_option("--spec", spec, "Plot spec YAML")->required();
  p->add_option("--out", out_dir, "Output directory")->required();
  p->add_option("--figure", figure, "Which figure")->required()->check(CLI::IsMember({"fig1", "fig2", "custom"}));

  std::string loss;
  uint64_t seed = 1;
  int trials = 100;
  std::optional<double> perturbation;
  bool corrupt = false;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of a loss gradient");
  g->add_option("--loss", loss, "Loss kind")->required();
  g->add_option("--seed", seed, "Base seed")->required();
  g->add_option("--trials", trials, "Random batches to check");
  g->add_option("--perturbation", perturbation, "Central-difference step");
  g->add_flag("--corrupt-gradient", corrupt, "Tamper with the analytic gradient (negative control)");

  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (s->parsed()) return cmd_stats(stats, args, out);
    if (t->parsed()) return cmd_train(config, out_dir, save_dataset, args, out);
    if (w->parsed()) return cmd_sweep(config, out_dir, jobs, args, out);
    if (p->parsed()) return cmd_plot(spec, out_dir, figure, args, out);
    if (g->parsed()) return cmd_gradcheck(loss, seed, trials, perturbation, corrupt, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ZeroCountError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const EmptyDatasetError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace bofl::cli
