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

// YAML documents for experiments, sweeps and schedule plots. Every problem in
// a document is collected and reported together as a ValidationError, before
// anything is computed.

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "bofl/schedules.hpp"
#include "bofl/synth.hpp"
#include "bofl/trainer.hpp"

namespace bofl {

struct ExperimentConfig {
  std::string label = "run";
  SynthSpec dataset;
  SynthSpec heldout;  // shares the dataset's class means
  TrainConfig train;
};

// Parses and validates one experiment. A `sweep` section is allowed and
// ignored here.
ExperimentConfig parse_experiment(const YAML::Node& doc);
ExperimentConfig parse_experiment_text(std::string_view yaml);
ExperimentConfig load_experiment_file(const std::filesystem::path& path);

struct SweepAxis {
  std::string path;  // dotted key, e.g. "schedule.eta"
  std::vector<YAML::Node> values;
};

struct SweepRun {
  std::string label;
  ExperimentConfig config;
};

struct SweepPlan {
  YAML::Node base;
  std::vector<SweepAxis> axes;
  size_t max_runs = 64;

  size_t grid_size() const;
  // Every grid point in row-major axis order, each validated. Throws
  // ValidationError when the grid exceeds max_runs or any point is invalid.
  std::vector<SweepRun> expand() const;
};

SweepPlan parse_sweep(const YAML::Node& doc);
SweepPlan load_sweep_file(const std::filesystem::path& path);

struct PlotSpec {
  ScheduleSpec schedule;
  int steps_per_epoch = 10;
  std::vector<double> alphas = {2.0, 1.5, 1.0, 0.5, 0.0};
};

PlotSpec parse_plot_spec(const YAML::Node& doc);
PlotSpec load_plot_spec_file(const std::filesystem::path& path);

// Loads a YAML file, mapping syntax errors to ParseError with line/column.
YAML::Node load_yaml_file(const std::filesystem::path& path);

nlohmann::json to_json(const ScheduleSpec& spec);
nlohmann::json to_json(const SynthSpec& spec);
nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const PlotSpec& spec);

}  // namespace bofl
