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

// Class statistics of an annotation set and the per-class weighting factors
// derived from them.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace bofl {

struct ClassStats {
  std::vector<int64_t> class_ids;  // ascending
  std::vector<std::string> names;
  std::vector<int64_t> instance_counts;
  std::vector<int64_t> image_counts;  // distinct images containing the class
  int64_t total_instances = 0;
  int64_t total_images = 0;

  size_t num_classes() const { return class_ids.size(); }

  // Throws SchemaError if the invariants do not hold.
  void validate() const;
};

enum class WeightingMethod { EffectiveNumber, InverseFrequencyApprox };

struct WeightingFactors {
  std::vector<double> alphas;
  WeightingMethod method = WeightingMethod::InverseFrequencyApprox;
  double beta = 0.0;  // only meaningful for EffectiveNumber
  // Dataset-level strength in [0,1]. Stored alphas are never pre-scaled;
  // the scaling is applied when the schedule is evaluated.
  double intensity = 1.0;
  // Class indices whose instance count was zero and received the capped value.
  std::vector<size_t> capped_classes;

  size_t size() const { return alphas.size(); }

  // alphas with intensity folded in: 1 + intensity * (alpha - 1).
  std::vector<double> intensity_scaled() const;

  // All ones; used when re-weighting is disabled.
  static WeightingFactors uniform(size_t num_classes);
};

// Parses the minimal COCO subset (images/annotations/categories).
ClassStats ingest_annotations(std::string_view json_text);
ClassStats ingest_annotations_file(const std::filesystem::path& path);

// alpha_y = (1 - beta) / (1 - beta^n_y). Throws ZeroCountError when any n_y is 0.
WeightingFactors effective_number_alpha(const ClassStats& stats, double beta);

// alpha_y = n / (C * n_y). Zero-count classes are treated as n_y = 1 and
// listed in capped_classes. Throws EmptyDatasetError when n = 0.
WeightingFactors inverse_frequency_alpha(const ClassStats& stats);

struct LimitCheckRow {
  double beta = 0.0;
  std::vector<double> ratios;  // normalized effective-number alpha / inverse-frequency alpha
  double max_deviation = 0.0;  // max |ratio - 1|
};

struct LimitCheckReport {
  std::vector<LimitCheckRow> rows;
  // max_deviation is nonincreasing along the beta sequence and the last row
  // is within `tolerance`.
  bool converging = false;
  double tolerance = 1e-6;
};

LimitCheckReport limit_consistency_check(const ClassStats& stats,
                                         const std::vector<double>& beta_sequence,
                                         double tolerance = 1e-6);

struct HeadTailSplit {
  std::set<int64_t> head;
  std::set<int64_t> tail;
};

// A class is tail iff image_counts[c] / total_images < tail_ratio.
HeadTailSplit split_head_tail(const ClassStats& stats, double tail_ratio);

// class_id,name,instances,images,alpha_effnum,alpha_invfreq
// alpha_effnum is left empty for zero-count classes.
void write_stats_csv(std::ostream& out, const ClassStats& stats, double beta);

}  // namespace bofl
