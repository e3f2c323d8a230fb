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

#include "bofl/losses.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bofl/error.hpp"
#include "bofl/kernels.hpp"

namespace bofl {

namespace {

kernels::FocalParams params_of(const LossConfig& cfg) {
  return {cfg.gamma, cfg.penalty_beta, cfg.prob_clamp_epsilon};
}

// Runs the plane kernel over every (image, class) plane. `weight_of` returns
// the uniform weight for the plane and, optionally, per-cell weights.
template <class WeightOf>
LossReport run_planes(const HeatmapBatch& batch, const kernels::FocalParams& params,
                      WeightOf&& weight_of) {
  const BatchShape& s = batch.shape();
  const size_t plane = s.plane();
  const double inv_norm = 1.0 / batch.normalizer();

  LossReport report;
  report.per_class.assign(s.classes, 0.0);
  report.per_class_background.assign(s.classes, 0.0);
  report.gradient.assign(s.size(), 0.0);

  for (size_t k = 0; k < s.images; ++k) {
    for (size_t i = 0; i < s.classes; ++i) {
      const auto [uniform, cells] = weight_of(k, i);
      kernels::PlaneArgs args;
      args.logits = batch.logit_plane(k, i);
      args.targets = batch.target_plane(k, i);
      args.cell_weights = cells;
      args.uniform_weight = uniform;
      args.grad_scale = inv_norm;
      args.grad = std::span<double>(report.gradient).subspan((k * s.classes + i) * plane, plane);
      const kernels::PlaneSums sums = kernels::focal_plane(params, args);
      report.per_class[i] += sums.foreground;
      report.per_class_background[i] += sums.background;
    }
  }
  double total = 0.0;
  for (size_t i = 0; i < s.classes; ++i) {
    report.per_class[i] *= inv_norm;
    report.per_class_background[i] *= inv_norm;
    report.background += report.per_class_background[i];
    total += report.per_class[i];
  }
  report.total = total + report.background;
  return report;
}

using PlaneWeight = std::pair<double, std::span<const double>>;

void require_alphas(const HeatmapBatch& batch, std::span<const double> alphas) {
  if (alphas.size() != batch.shape().classes) {
    throw ShapeError(fmt::format("batch has {} classes but {} weighting factors were given",
                                 batch.shape().classes, alphas.size()));
  }
}

}  // namespace

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::SigmoidCE:
      return "sigmoid_ce";
    case LossKind::Focal:
      return "focal";
    case LossKind::PenaltyReducedFocal:
      return "penalty_reduced_focal";
    case LossKind::ClassBalancedFocal:
      return "class_balanced_focal";
    case LossKind::ClassWiseFocal:
      return "class_wise_focal";
    case LossKind::BOFL:
      return "bofl";
  }
  return "unknown";
}

std::optional<LossKind> parse_loss_kind(std::string_view name) {
  for (LossKind k : {LossKind::SigmoidCE, LossKind::Focal, LossKind::PenaltyReducedFocal,
                     LossKind::ClassBalancedFocal, LossKind::ClassWiseFocal, LossKind::BOFL}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

void LossConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ArgumentError(fmt::format("gamma must be >= 0, got {}", gamma));
  }
  if (!(prob_clamp_epsilon > 0.0 && prob_clamp_epsilon <= 1e-3)) {
    throw ArgumentError(
        fmt::format("prob_clamp_epsilon must lie in (0, 1e-3], got {}", prob_clamp_epsilon));
  }
  if (!(penalty_beta >= 0.0) || !std::isfinite(penalty_beta)) {
    throw ArgumentError(fmt::format("penalty_beta must be >= 0, got {}", penalty_beta));
  }
  if (!std::isfinite(background_weight) || background_weight < 0.0) {
    throw ArgumentError(fmt::format("background_weight must be >= 0, got {}", background_weight));
  }
}

HeatmapBatch::HeatmapBatch(BatchShape shape, std::vector<double> logits, std::vector<double> targets)
    : shape_(shape), logits_(std::move(logits)), targets_(std::move(targets)) {
  if (shape_.size() == 0) throw ShapeError("heatmap batch must not be empty");
  if (logits_.size() != shape_.size() || targets_.size() != shape_.size()) {
    throw ShapeError(fmt::format("heatmap batch expects {} cells, got {} logits and {} targets",
                                 shape_.size(), logits_.size(), targets_.size()));
  }
  peaks_.assign(shape_.classes * shape_.images, 0);
  const size_t plane = shape_.plane();
  for (size_t k = 0; k < shape_.images; ++k) {
    for (size_t i = 0; i < shape_.classes; ++i) {
      const double* y = targets_.data() + (k * shape_.classes + i) * plane;
      int64_t count = 0;
      for (size_t c = 0; c < plane; ++c) {
        if (!(y[c] >= 0.0 && y[c] <= 1.0)) {
          throw ArgumentError(fmt::format("target {} outside [0, 1]", y[c]));
        }
        if (y[c] == 1.0) ++count;
      }
      peaks_[i * shape_.images + k] = count;
      total_peaks_ += count;
    }
  }
}

HeatmapBatch HeatmapBatch::from_probabilities(BatchShape shape, std::span<const double> probabilities,
                                              std::vector<double> targets) {
  std::vector<double> logits(probabilities.size());
  for (size_t i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    if (!(p > 0.0 && p < 1.0)) throw ArgumentError(fmt::format("probability {} outside (0, 1)", p));
    logits[i] = std::log(p) - std::log1p(-p);
  }
  return HeatmapBatch(shape, std::move(logits), std::move(targets));
}

std::span<const double> HeatmapBatch::logit_plane(size_t image, size_t cls) const {
  return std::span<const double>(logits_).subspan((image * shape_.classes + cls) * shape_.plane(),
                                                  shape_.plane());
}

std::span<const double> HeatmapBatch::target_plane(size_t image, size_t cls) const {
  return std::span<const double>(targets_).subspan((image * shape_.classes + cls) * shape_.plane(),
                                                   shape_.plane());
}

std::vector<double> HeatmapBatch::probabilities() const {
  std::vector<double> out(logits_.size());
  kernels::sigmoid_plane(logits_, out);
  return out;
}

nlohmann::json LossReport::to_json(bool include_gradient) const {
  nlohmann::json j;
  j["total"] = total;
  j["per_class"] = per_class;
  j["per_class_background"] = per_class_background;
  j["background"] = background;
  if (include_gradient) j["gradient"] = gradient;
  return j;
}

double pt_transform(double p, bool positive) { return positive ? p : 1.0 - p; }

double focal_term(double p_t, double gamma) { return -std::pow(1.0 - p_t, gamma) * std::log(p_t); }

LossReport focal(const HeatmapBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  auto params = params_of(cfg);
  params.penalty_beta = 0.0;
  return run_planes(batch, params, [](size_t, size_t) { return PlaneWeight{1.0, {}}; });
}

LossReport penalty_reduced_focal(const HeatmapBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  return run_planes(batch, params_of(cfg), [](size_t, size_t) { return PlaneWeight{1.0, {}}; });
}

LossReport sigmoid_ce(const HeatmapBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  auto params = params_of(cfg);
  params.gamma = 0.0;
  return run_planes(batch, params, [](size_t, size_t) { return PlaneWeight{1.0, {}}; });
}

LossReport class_balanced_focal(const HeatmapBatch& batch, std::span<const double> alphas,
                                const LossConfig& cfg) {
  cfg.validate();
  require_alphas(batch, alphas);
  const BatchShape& s = batch.shape();
  const size_t plane = s.plane();

  // Position weights per image, shared by every channel of that image.
  std::vector<double> position_weights(s.images * plane, cfg.background_weight);
  for (size_t k = 0; k < s.images; ++k) {
    double* w = position_weights.data() + k * plane;
    std::vector<bool> has_peak(plane, false);
    for (size_t i = 0; i < s.classes; ++i) {
      if (batch.peak_count(i, k) == 0) continue;
      const auto y = batch.target_plane(k, i);
      for (size_t c = 0; c < plane; ++c) {
        if (y[c] != 1.0) continue;
        w[c] = has_peak[c] ? std::max(w[c], alphas[i]) : alphas[i];
        has_peak[c] = true;
      }
    }
  }
  return run_planes(batch, params_of(cfg), [&](size_t k, size_t) {
    return PlaneWeight{1.0, std::span<const double>(position_weights).subspan(k * plane, plane)};
  });
}

LossReport class_wise_focal(const HeatmapBatch& batch, std::span<const double> alphas,
                            const LossConfig& cfg) {
  cfg.validate();
  require_alphas(batch, alphas);
  return run_planes(batch, params_of(cfg),
                    [&](size_t, size_t i) { return PlaneWeight{alphas[i], {}}; });
}

ClassImageWeights batch_balanced_weights(std::span<const double> alphas_scheduled,
                                         double eta_scheduled, const HeatmapBatch& counts) {
  if (alphas_scheduled.size() != counts.shape().classes) {
    throw ShapeError("weighting factor count does not match the batch class count");
  }
  std::vector<std::vector<int64_t>> table(counts.shape().classes,
                                          std::vector<int64_t>(counts.shape().images));
  for (size_t i = 0; i < table.size(); ++i) {
    for (size_t k = 0; k < table[i].size(); ++k) table[i][k] = counts.peak_count(i, k);
  }
  return batch_balanced_weights(alphas_scheduled, eta_scheduled, table);
}

ClassImageWeights batch_balanced_weights(std::span<const double> alphas_scheduled,
                                         double eta_scheduled,
                                         const std::vector<std::vector<int64_t>>& counts) {
  if (!(eta_scheduled >= 0.0 && eta_scheduled <= 1.0)) {
    throw ArgumentError(fmt::format("eta must lie in [0, 1], got {}", eta_scheduled));
  }
  if (counts.size() != alphas_scheduled.size()) {
    throw ShapeError("count table rows must match the number of classes");
  }
  const size_t images = counts.empty() ? 0 : counts.front().size();
  ClassImageWeights w(alphas_scheduled.size(), images);
  for (size_t i = 0; i < counts.size(); ++i) {
    if (counts[i].size() != images) throw ShapeError("ragged count table");
    for (size_t k = 0; k < images; ++k) {
      if (counts[i][k] < 0) throw ArgumentError("negative object count");
      w.at(i, k) = alphas_scheduled[i] * std::pow(eta_scheduled, static_cast<double>(counts[i][k]));
    }
  }
  return w;
}

LossReport bofl(const HeatmapBatch& batch, const ClassImageWeights& weights, const LossConfig& cfg) {
  cfg.validate();
  if (weights.classes() != batch.shape().classes || weights.images() != batch.shape().images) {
    throw ShapeError(fmt::format("weights are {}x{} but the batch is {} classes x {} images",
                                 weights.classes(), weights.images(), batch.shape().classes,
                                 batch.shape().images));
  }
  return run_planes(batch, params_of(cfg),
                    [&](size_t k, size_t i) { return PlaneWeight{weights.at(i, k), {}}; });
}

LossReport compute_loss(const HeatmapBatch& batch, const LossWeights& weights,
                        const LossConfig& cfg) {
  switch (cfg.kind) {
    case LossKind::SigmoidCE:
      return sigmoid_ce(batch, cfg);
    case LossKind::Focal:
      return focal(batch, cfg);
    case LossKind::PenaltyReducedFocal:
      return penalty_reduced_focal(batch, cfg);
    case LossKind::ClassBalancedFocal:
      return class_balanced_focal(batch, weights.alphas, cfg);
    case LossKind::ClassWiseFocal:
      return class_wise_focal(batch, weights.alphas, cfg);
    case LossKind::BOFL:
      return bofl(batch, weights.per_image, cfg);
  }
  throw ArgumentError("unknown loss kind");
}

}  // namespace bofl
