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

#include "bofl/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <fmt/format.h>

#include "bofl/error.hpp"

namespace bofl {

namespace {

template <typename T>
constexpr const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) {
    return "a boolean";
  } else if constexpr (std::is_integral_v<T>) {
    return "an integer";
  } else if constexpr (std::is_floating_point_v<T>) {
    return "a number";
  } else {
    return "a string";
  }
}

// Collects problems while walking a document.
class Reader {
 public:
  std::vector<std::string> problems;

  void problem(const std::string& where, const std::string& what) {
    problems.push_back(where.empty() ? what : where + ": " + what);
  }

  static std::string join(const std::string& prefix, std::string_view key) {
    return prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
  }

  // False (and a problem) unless `node` is a map or absent.
  bool expect_map(const YAML::Node& node, const std::string& where) {
    if (!node || node.IsNull() || node.IsMap()) return true;
    problem(where, "expected a mapping");
    return false;
  }

  void allowed_keys(const YAML::Node& map, const std::string& prefix,
                    std::initializer_list<std::string_view> keys) {
    if (!map || !map.IsMap()) return;
    for (const auto& kv : map) {
      std::string key;
      try {
        key = kv.first.as<std::string>();
      } catch (const YAML::Exception&) {
        problem(prefix, "non-string key");
        continue;
      }
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        problem(join(prefix, key), "unknown key");
      }
    }
  }

  template <typename T>
  bool get(const YAML::Node& map, const std::string& prefix, std::string_view key, T& out) {
    if (!map || !map.IsMap()) return false;
    const YAML::Node node = map[std::string(key)];
    if (!node) return false;
    try {
      if (!node.IsScalar()) throw YAML::Exception(node.Mark(), "not a scalar");
      out = node.as<T>();
      return true;
    } catch (const YAML::Exception&) {
      problem(join(prefix, key), fmt::format("expected {}", type_name<T>()));
      return false;
    }
  }

  template <typename T>
  bool get_list(const YAML::Node& map, const std::string& prefix, std::string_view key,
                std::vector<T>& out) {
    if (!map || !map.IsMap()) return false;
    const YAML::Node node = map[std::string(key)];
    if (!node) return false;
    if (!node.IsSequence()) {
      problem(join(prefix, key), "expected a list");
      return false;
    }
    std::vector<T> values;
    for (size_t i = 0; i < node.size(); ++i) {
      try {
        values.push_back(node[i].as<T>());
      } catch (const YAML::Exception&) {
        problem(fmt::format("{}[{}]", join(prefix, key), i), fmt::format("expected {}", type_name<T>()));
        return false;
      }
    }
    out = std::move(values);
    return true;
  }

  template <typename E, typename Parse>
  void get_enum(const YAML::Node& map, const std::string& prefix, std::string_view key, E& out,
                Parse parse, std::string_view choices) {
    std::string name;
    if (!get(map, prefix, key, name)) return;
    if (auto v = parse(name)) {
      out = *v;
    } else {
      problem(join(prefix, key), fmt::format("unknown value '{}' (expected one of {})", name, choices));
    }
  }

  template <typename Fn>
  void check(const std::string& where, Fn&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      for (const auto& p : e.problems()) problem(where, p);
    } catch (const Error& e) {
      problem(where, e.what());
    }
  }
};

void read_distribution(Reader& r, const YAML::Node& node, const std::string& prefix,
                       SynthSpec& spec) {
  std::string kind;
  const bool has_kind = r.get(node, prefix, "distribution", kind);
  std::vector<int64_t> counts;
  const bool has_counts = r.get_list(node, prefix, "counts", counts);
  double exponent = 1.5;
  const bool has_exponent = r.get(node, prefix, "exponent", exponent);
  std::vector<int> range;
  if (r.get_list(node, prefix, "objects_per_image", range)) {
    if (range.size() != 2) {
      r.problem(Reader::join(prefix, "objects_per_image"), "expected [min, max]");
    } else {
      spec.min_objects = range[0];
      spec.max_objects = range[1];
    }
  }
  if (!has_kind) {
    if (has_counts) r.problem(Reader::join(prefix, "counts"), "only valid with distribution: explicit");
    if (has_exponent) {
      r.problem(Reader::join(prefix, "exponent"), "only valid with distribution: power_law");
    }
    return;
  }
  if (kind == "uniform") {
    spec.class_distribution = UniformClasses{};
  } else if (kind == "power_law") {
    spec.class_distribution = PowerLawClasses{exponent};
  } else if (kind == "explicit") {
    if (!has_counts) r.problem(Reader::join(prefix, "counts"), "required for distribution: explicit");
    spec.class_distribution = ExplicitClasses{counts};
  } else {
    r.problem(Reader::join(prefix, "distribution"),
              fmt::format("unknown value '{}' (expected one of uniform, power_law, explicit)", kind));
  }
  if (kind != "explicit" && has_counts) {
    r.problem(Reader::join(prefix, "counts"), "only valid with distribution: explicit");
  }
  if (kind != "power_law" && has_exponent) {
    r.problem(Reader::join(prefix, "exponent"), "only valid with distribution: power_law");
  }
}

SynthSpec read_dataset(Reader& r, const YAML::Node& node) {
  const std::string p = "dataset";
  SynthSpec s;
  if (!r.expect_map(node, p)) return s;
  r.allowed_keys(node, p,
                 {"num_classes", "height", "width", "images", "distribution", "counts", "exponent",
                  "objects_per_image", "gaussian_sigma", "feature_dim", "feature_separation",
                  "feature_noise", "seed"});
  r.get(node, p, "num_classes", s.num_classes);
  r.get(node, p, "height", s.height);
  r.get(node, p, "width", s.width);
  r.get(node, p, "images", s.images);
  read_distribution(r, node, p, s);
  r.get(node, p, "gaussian_sigma", s.gaussian_sigma);
  r.get(node, p, "feature_dim", s.feature_dim);
  r.get(node, p, "feature_separation", s.feature_separation);
  r.get(node, p, "feature_noise", s.feature_noise);
  r.get(node, p, "seed", s.seed);
  return s;
}

SynthSpec read_heldout(Reader& r, const YAML::Node& node, const SynthSpec& train) {
  const std::string p = "heldout";
  SynthSpec s = train;
  s.feature_seed = train.feature_seed.value_or(train.seed);
  s.seed = train.seed + 1;
  if (!r.expect_map(node, p)) return s;
  r.allowed_keys(node, p, {"images", "seed", "distribution", "counts", "exponent", "objects_per_image"});
  r.get(node, p, "images", s.images);
  r.get(node, p, "seed", s.seed);
  read_distribution(r, node, p, s);
  return s;
}

ScheduleSpec read_schedule(Reader& r, const YAML::Node& node, const std::string& p) {
  ScheduleSpec s;
  if (!r.expect_map(node, p)) return s;
  r.allowed_keys(node, p,
                 {"rw_kind", "deferred_epochs", "update_cycle", "total_epochs", "lr_kind", "base_lr",
                  "warmup_iters", "intensity", "eta", "milestones", "decay_factor"});
  r.get_enum(node, p, "rw_kind", s.rw_kind, parse_reweight_kind,
             "constant, deferred, linear, linear_after_deferred");
  r.get(node, p, "deferred_epochs", s.deferred_epochs);
  r.get_enum(node, p, "update_cycle", s.update_cycle, parse_update_cycle, "per_epoch, per_step");
  r.get(node, p, "total_epochs", s.total_epochs);
  r.get_enum(node, p, "lr_kind", s.lr_kind, parse_lr_kind, "cosine, step_decay");
  r.get(node, p, "base_lr", s.base_lr);
  r.get(node, p, "warmup_iters", s.warmup_iters);
  r.get(node, p, "intensity", s.intensity);
  r.get(node, p, "eta", s.eta);
  r.get_list(node, p, "milestones", s.milestones);
  r.get(node, p, "decay_factor", s.decay_factor);
  return s;
}

LossConfig read_loss(Reader& r, const YAML::Node& node) {
  const std::string p = "loss";
  LossConfig c;
  if (!r.expect_map(node, p)) return c;
  r.allowed_keys(node, p, {"kind", "gamma", "penalty_beta", "prob_clamp_epsilon", "background_weight"});
  r.get_enum(node, p, "kind", c.kind, parse_loss_kind,
             "sigmoid_ce, focal, penalty_reduced_focal, class_balanced_focal, class_wise_focal, bofl");
  r.get(node, p, "gamma", c.gamma);
  r.get(node, p, "penalty_beta", c.penalty_beta);
  r.get(node, p, "prob_clamp_epsilon", c.prob_clamp_epsilon);
  r.get(node, p, "background_weight", c.background_weight);
  return c;
}

YAML::Node parse_yaml(std::string_view text, const std::string& origin) {
  try {
    return YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ParseError(fmt::format("{}:{}:{}: {}", origin, e.mark.line + 1, e.mark.column + 1, e.msg));
  }
}

std::string scalar_text(const YAML::Node& node) {
  if (node.IsScalar()) return node.Scalar();
  YAML::Emitter em;
  em << YAML::Flow << node;
  return em.c_str();
}

// Sets `path` (dotted) inside a cloned document, creating maps as needed.
void set_path(YAML::Node root, const std::string& path, const YAML::Node& value) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  // Node::operator= writes through to the referenced node; reset() rebinds.
  YAML::Node cur;
  cur.reset(root);
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!cur[parts[i]] || !cur[parts[i]].IsMap()) cur[parts[i]] = YAML::Node(YAML::NodeType::Map);
    YAML::Node next = cur[parts[i]];
    cur.reset(next);
  }
  cur[parts.back()] = value;
}

}  // namespace

ExperimentConfig parse_experiment(const YAML::Node& doc) {
  Reader r;
  ExperimentConfig cfg;
  if (!doc || !doc.IsMap()) throw ValidationError({"experiment document must be a mapping"});
  r.allowed_keys(doc, "",
                 {"label", "seed", "epochs", "batch_images", "init_std", "bias_prior_pi", "dataset",
                  "heldout", "schedule", "loss", "weighting", "eval", "sweep"});
  r.get(doc, "", "label", cfg.label);
  TrainConfig& t = cfg.train;
  r.get(doc, "", "seed", t.seed);
  r.get(doc, "", "epochs", t.epochs);
  r.get(doc, "", "batch_images", t.batch_images);
  r.get(doc, "", "init_std", t.init_std);
  double pi = 0.0;
  if (r.get(doc, "", "bias_prior_pi", pi)) t.bias_prior_pi = pi;

  cfg.dataset = read_dataset(r, doc["dataset"]);
  cfg.heldout = read_heldout(r, doc["heldout"], cfg.dataset);

  const YAML::Node sched = doc["schedule"];
  t.schedule = read_schedule(r, sched, "schedule");
  if (!(sched && sched.IsMap() && sched["total_epochs"])) t.schedule.total_epochs = t.epochs;
  t.loss = read_loss(r, doc["loss"]);

  const YAML::Node w = doc["weighting"];
  if (r.expect_map(w, "weighting")) {
    r.allowed_keys(w, "weighting", {"source", "beta"});
    r.get_enum(w, "weighting", "source", t.weighting, parse_weighting_source,
               "none, effective_number, inverse_frequency");
    r.get(w, "weighting", "beta", t.effnum_beta);
  }
  const YAML::Node ev = doc["eval"];
  if (r.expect_map(ev, "eval")) {
    r.allowed_keys(ev, "eval", {"peak_threshold", "tail_ratio"});
    r.get(ev, "eval", "peak_threshold", t.peak_threshold);
    double ratio = 0.0;
    if (r.get(ev, "eval", "tail_ratio", ratio)) t.tail_ratio = ratio;
  }

  if (r.problems.empty()) {
    r.check("dataset", [&] { cfg.dataset.validate(); });
    r.check("heldout", [&] { cfg.heldout.validate(); });
    r.check("", [&] { t.validate(); });
    if (t.weighting == WeightingSource::EffectiveNumber) {
      if (const auto* ex = std::get_if<ExplicitClasses>(&cfg.dataset.class_distribution)) {
        if (std::find(ex->counts.begin(), ex->counts.end(), 0) != ex->counts.end()) {
          r.problem("weighting.source",
                    "effective_number weighting needs every class count >= 1; use inverse_frequency");
        }
      }
    }
  }
  if (!r.problems.empty()) throw ValidationError(std::move(r.problems));
  return cfg;
}

ExperimentConfig parse_experiment_text(std::string_view yaml) {
  return parse_experiment(parse_yaml(yaml, "<config>"));
}

YAML::Node load_yaml_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError(fmt::format("cannot open '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_yaml(ss.str(), path.string());
}

ExperimentConfig load_experiment_file(const std::filesystem::path& path) {
  return parse_experiment(load_yaml_file(path));
}

size_t SweepPlan::grid_size() const {
  size_t n = 1;
  for (const auto& a : axes) n *= a.values.size();
  return n;
}

std::vector<SweepRun> SweepPlan::expand() const {
  const size_t n = grid_size();
  if (n > max_runs) {
    throw ValidationError({fmt::format("sweep grid has {} runs, more than max_runs = {}", n, max_runs)});
  }
  std::vector<SweepRun> runs;
  std::vector<std::string> problems;
  std::vector<size_t> idx(axes.size(), 0);
  const std::string base_label = base["label"] ? base["label"].as<std::string>() : "run";
  for (size_t run = 0; run < n; ++run) {
    YAML::Node doc = YAML::Clone(base);
    doc.remove("sweep");
    std::string label;
    for (size_t a = 0; a < axes.size(); ++a) {
      const YAML::Node& v = axes[a].values[idx[a]];
      set_path(doc, axes[a].path, v);
      label += (label.empty() ? "" : ",") + axes[a].path + "=" + scalar_text(v);
    }
    if (label.empty()) label = base_label;
    doc["label"] = label;
    try {
      runs.push_back({label, parse_experiment(doc)});
    } catch (const ValidationError& e) {
      for (const auto& p : e.problems()) problems.push_back(fmt::format("run '{}': {}", label, p));
    }
    // Last axis varies fastest.
    for (size_t a = axes.size(); a-- > 0;) {
      if (++idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
    }
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return runs;
}

SweepPlan parse_sweep(const YAML::Node& doc) {
  if (!doc || !doc.IsMap()) throw ValidationError({"sweep document must be a mapping"});
  Reader r;
  SweepPlan plan;
  plan.base = doc;
  const YAML::Node sw = doc["sweep"];
  if (!sw) {
    // A document without axes is a single-point grid.
    return plan;
  }
  if (r.expect_map(sw, "sweep")) {
    r.allowed_keys(sw, "sweep", {"max_runs", "axes"});
    r.get(sw, "sweep", "max_runs", plan.max_runs);
    const YAML::Node axes = sw["axes"];
    if (axes && !axes.IsMap()) {
      r.problem("sweep.axes", "expected a mapping of dotted keys to value lists");
    } else if (axes) {
      for (const auto& kv : axes) {
        SweepAxis axis;
        axis.path = kv.first.as<std::string>();
        const std::string where = "sweep.axes." + axis.path;
        if (axis.path.empty() || axis.path.front() == '.' || axis.path.back() == '.') {
          r.problem(where, "malformed key path");
          continue;
        }
        if (axis.path.rfind("sweep", 0) == 0 || axis.path == "label") {
          r.problem(where, "cannot sweep this key");
          continue;
        }
        if (!kv.second.IsSequence() || kv.second.size() == 0) {
          r.problem(where, "expected a non-empty list of values");
          continue;
        }
        for (const auto& v : kv.second) axis.values.push_back(v);
        plan.axes.push_back(std::move(axis));
      }
    }
  }
  if (!r.problems.empty()) throw ValidationError(std::move(r.problems));
  return plan;
}

SweepPlan load_sweep_file(const std::filesystem::path& path) { return parse_sweep(load_yaml_file(path)); }

PlotSpec parse_plot_spec(const YAML::Node& doc) {
  if (!doc || !doc.IsMap()) throw ValidationError({"plot spec must be a mapping"});
  Reader r;
  PlotSpec spec;
  r.allowed_keys(doc, "", {"schedule", "steps_per_epoch", "alphas"});
  spec.schedule = read_schedule(r, doc["schedule"], "schedule");
  r.get(doc, "", "steps_per_epoch", spec.steps_per_epoch);
  r.get_list(doc, "", "alphas", spec.alphas);
  if (r.problems.empty()) {
    if (spec.steps_per_epoch < 1) r.problem("steps_per_epoch", "must be >= 1");
    if (spec.alphas.empty()) r.problem("alphas", "must not be empty");
    for (double a : spec.alphas) {
      if (!std::isfinite(a) || a < 0.0) r.problem("alphas", "values must be finite and >= 0");
    }
    r.check("schedule", [&] { spec.schedule.validate(); });
  }
  if (!r.problems.empty()) throw ValidationError(std::move(r.problems));
  return spec;
}

PlotSpec load_plot_spec_file(const std::filesystem::path& path) {
  return parse_plot_spec(load_yaml_file(path));
}

nlohmann::json to_json(const ScheduleSpec& s) {
  return {{"rw_kind", to_string(s.rw_kind)},
          {"deferred_epochs", s.deferred_epochs},
          {"update_cycle", to_string(s.update_cycle)},
          {"total_epochs", s.total_epochs},
          {"lr_kind", to_string(s.lr_kind)},
          {"base_lr", s.base_lr},
          {"warmup_iters", s.warmup_iters},
          {"intensity", s.intensity},
          {"eta", s.eta},
          {"milestones", s.effective_milestones()},
          {"decay_factor", s.decay_factor}};
}

nlohmann::json to_json(const SynthSpec& s) {
  nlohmann::json j = {{"num_classes", s.num_classes},
                      {"height", s.height},
                      {"width", s.width},
                      {"images", s.images},
                      {"objects_per_image", {s.min_objects, s.max_objects}},
                      {"gaussian_sigma", s.gaussian_sigma},
                      {"feature_dim", s.feature_dim},
                      {"feature_separation", s.feature_separation},
                      {"feature_noise", s.feature_noise},
                      {"seed", s.seed},
                      {"feature_seed", s.feature_seed.value_or(s.seed)}};
  std::visit(
      [&](const auto& d) {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, UniformClasses>) {
          j["distribution"] = "uniform";
        } else if constexpr (std::is_same_v<D, PowerLawClasses>) {
          j["distribution"] = "power_law";
          j["exponent"] = d.exponent;
        } else {
          j["distribution"] = "explicit";
          j["counts"] = d.counts;
        }
      },
      s.class_distribution);
  return j;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  const TrainConfig& t = cfg.train;
  nlohmann::json j = {
      {"label", cfg.label},
      {"seed", t.seed},
      {"epochs", t.epochs},
      {"batch_images", t.batch_images},
      {"init_std", t.init_std},
      {"dataset", to_json(cfg.dataset)},
      {"heldout", to_json(cfg.heldout)},
      {"schedule", to_json(t.schedule)},
      {"loss",
       {{"kind", to_string(t.loss.kind)},
        {"gamma", t.loss.gamma},
        {"penalty_beta", t.loss.penalty_beta},
        {"prob_clamp_epsilon", t.loss.prob_clamp_epsilon},
        {"background_weight", t.loss.background_weight}}},
      {"weighting", {{"source", to_string(t.weighting)}, {"beta", t.effnum_beta}}},
      {"eval", {{"peak_threshold", t.peak_threshold}}}};
  j["bias_prior_pi"] = t.bias_prior_pi ? nlohmann::json(*t.bias_prior_pi) : nlohmann::json(nullptr);
  j["eval"]["tail_ratio"] = t.tail_ratio ? nlohmann::json(*t.tail_ratio) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const PlotSpec& spec) {
  return {{"schedule", to_json(spec.schedule)},
          {"steps_per_epoch", spec.steps_per_epoch},
          {"alphas", spec.alphas}};
}

}  // namespace bofl
