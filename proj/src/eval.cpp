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

#include "bofl/eval.hpp"

#include <algorithm>
#include <ostream>

#include <fmt/format.h>

#include "bofl/error.hpp"

namespace bofl {

PeakEvaluator::PeakEvaluator(size_t classes, double threshold)
    : classes_(classes),
      threshold_(threshold),
      support_(classes, 0),
      detected_(classes, 0),
      predicted_(classes, 0),
      true_positive_(classes, 0) {
  if (classes == 0) throw ArgumentError("evaluation needs at least one class");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ArgumentError(fmt::format("peak threshold must lie in (0, 1), got {}", threshold));
  }
}

void PeakEvaluator::add_image(std::span<const double> probabilities, std::span<const double> targets,
                              size_t height, size_t width) {
  const size_t plane = height * width;
  if (probabilities.size() != classes_ * plane || targets.size() != classes_ * plane) {
    throw ShapeError("evaluation image does not match the declared class count and grid");
  }
  for (size_t cell = 0; cell < plane; ++cell) {
    // Strict argmax; ties leave the cell without a prediction.
    size_t best = 0;
    double best_p = probabilities[cell];
    bool tie = false;
    for (size_t c = 1; c < classes_; ++c) {
      const double p = probabilities[c * plane + cell];
      if (p > best_p) {
        best = c;
        best_p = p;
        tie = false;
      } else if (p == best_p) {
        tie = true;
      }
    }
    const bool predicts = !tie && best_p > threshold_;
    if (predicts) ++predicted_[best];
    for (size_t c = 0; c < classes_; ++c) {
      if (targets[c * plane + cell] != 1.0) continue;
      ++support_[c];
      if (predicts && best == c) {
        ++detected_[c];
        ++true_positive_[c];
      }
    }
  }
  ++images_;
}

EvalReport PeakEvaluator::finish(const std::vector<bool>& is_tail) const {
  if (images_ == 0) throw EmptyDatasetError("evaluation set is empty");
  if (!is_tail.empty() && is_tail.size() != classes_) {
    throw ShapeError("tail mask does not match the class count");
  }
  EvalReport r;
  r.support = support_;
  r.predictions = predicted_;
  double head_sum = 0.0, tail_sum = 0.0;
  size_t heads = 0, tails = 0;
  for (size_t c = 0; c < classes_; ++c) {
    const double recall =
        support_[c] > 0 ? static_cast<double>(detected_[c]) / static_cast<double>(support_[c]) : 0.0;
    const double precision = predicted_[c] > 0 ? static_cast<double>(true_positive_[c]) /
                                                     static_cast<double>(predicted_[c])
                                               : 0.0;
    r.per_class_recall.push_back(recall);
    r.per_class_precision.push_back(precision);
    if (!is_tail.empty()) {
      if (is_tail[c]) {
        tail_sum += recall;
        ++tails;
      } else {
        head_sum += recall;
        ++heads;
      }
    }
  }
  double sum = 0.0;
  for (double v : r.per_class_recall) sum += v;
  r.macro_recall = sum / static_cast<double>(classes_);
  r.min_class_recall = *std::min_element(r.per_class_recall.begin(), r.per_class_recall.end());
  if (heads > 0 && tails > 0) {
    r.has_head_tail = true;
    r.head_tail_gap = head_sum / static_cast<double>(heads) - tail_sum / static_cast<double>(tails);
  }
  return r;
}

EvalReport evaluate_heatmaps(const BatchShape& shape, std::span<const double> probabilities,
                             std::span<const double> targets, double threshold,
                             const std::vector<bool>& is_tail) {
  if (shape.images == 0) throw EmptyDatasetError("evaluation set is empty");
  if (probabilities.size() != shape.size() || targets.size() != shape.size()) {
    throw ShapeError("probabilities/targets do not match the batch shape");
  }
  PeakEvaluator ev(shape.classes, threshold);
  const size_t per_image = shape.classes * shape.plane();
  for (size_t k = 0; k < shape.images; ++k) {
    ev.add_image(probabilities.subspan(k * per_image, per_image),
                 targets.subspan(k * per_image, per_image), shape.height, shape.width);
  }
  return ev.finish(is_tail);
}

void AblationTable::write_csv(std::ostream& out) const {
  out << "label,macro_recall,min_class_recall,delta_macro,delta_min\n";
  for (const auto& row : rows) {
    out << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f}\n", row.label, row.macro_recall,
                       row.min_class_recall, row.delta_macro, row.delta_min);
  }
}

std::string AblationTable::render_text() const {
  size_t width = 5;
  for (const auto& row : rows) width = std::max(width, row.label.size());
  std::string out = fmt::format("{:<{}}  {:>12}  {:>12}  {:>9}  {:>9}\n", "run", width,
                                "macro_recall", "min_recall", "d_macro", "d_min");
  for (const auto& row : rows) {
    out += fmt::format("{:<{}}  {:>12.4f}  {:>12.4f}  {:>+9.4f}  {:>+9.4f}\n", row.label, width,
                       row.macro_recall, row.min_class_recall, row.delta_macro, row.delta_min);
  }
  return out;
}

AblationTable compare_runs(std::span<const RunSummary> runs) {
  if (runs.empty()) throw ArgumentError("no runs to compare");
  const uint64_t seed = runs.front().dataset_seed;
  for (const auto& r : runs) {
    if (r.dataset_seed != seed) {
      throw ArgumentError(fmt::format(
          "run '{}' used dataset seed {} but the baseline '{}' used {}; runs are not comparable",
          r.label, r.dataset_seed, runs.front().label, seed));
    }
  }
  AblationTable table;
  const auto& base = runs.front().final_eval;
  for (const auto& r : runs) {
    AblationRow row;
    row.label = r.label;
    row.macro_recall = r.final_eval.macro_recall;
    row.min_class_recall = r.final_eval.min_class_recall;
    row.delta_macro = row.macro_recall - base.macro_recall;
    row.delta_min = row.min_class_recall - base.min_class_recall;
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace bofl
