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

// Per-class peak recall/precision and ablation tables over training runs.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bofl/losses.hpp"

namespace bofl {

struct EvalReport {
  std::vector<double> per_class_recall;
  std::vector<double> per_class_precision;
  std::vector<int64_t> support;      // ground-truth peaks per class
  std::vector<int64_t> predictions;  // predicted positives per class
  double macro_recall = 0.0;
  double min_class_recall = 0.0;
  // Mean head recall minus mean tail recall; 0 unless has_head_tail.
  double head_tail_gap = 0.0;
  bool has_head_tail = false;
};

// Accumulates detection decisions image by image.
//
// A cell predicts class c when p_c > threshold and p_c is strictly larger
// than every other channel at that cell. A ground-truth peak of class c is
// detected iff its cell predicts c. Recall and precision of a class with no
// support (or no predictions) are reported as 0.
class PeakEvaluator {
 public:
  PeakEvaluator(size_t classes, double threshold);

  // probabilities and targets of one image, (C, H, W).
  void add_image(std::span<const double> probabilities, std::span<const double> targets,
                 size_t height, size_t width);

  // `is_tail`, if non-empty, marks tail classes by index for head_tail_gap.
  EvalReport finish(const std::vector<bool>& is_tail = {}) const;

 private:
  size_t classes_;
  double threshold_;
  size_t images_ = 0;
  std::vector<int64_t> support_;
  std::vector<int64_t> detected_;
  std::vector<int64_t> predicted_;
  std::vector<int64_t> true_positive_;
};

// Whole-batch convenience wrapper over PeakEvaluator.
EvalReport evaluate_heatmaps(const BatchShape& shape, std::span<const double> probabilities,
                             std::span<const double> targets, double threshold,
                             const std::vector<bool>& is_tail = {});

struct RunSummary {
  std::string label;
  uint64_t dataset_seed = 0;
  EvalReport final_eval;
};

struct AblationRow {
  std::string label;
  double macro_recall = 0.0;
  double min_class_recall = 0.0;
  double delta_macro = 0.0;  // relative to the first row
  double delta_min = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  void write_csv(std::ostream& out) const;
  std::string render_text() const;
};

// Throws ArgumentError when runs are empty or were trained on different
// dataset seeds.
AblationTable compare_runs(std::span<const RunSummary> runs);

}  // namespace bofl
