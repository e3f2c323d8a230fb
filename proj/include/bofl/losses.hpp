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

// Heatmap losses for per-pixel sigmoid classifiers: focal, penalty-reduced
// focal, sigmoid cross-entropy and the re-weighted variants (per-sample
// class-balanced, class-wise, and batch-balanced BOFL). Every kernel returns
// the loss together with its analytic gradient with respect to the logits.
//
// All totals are normalized by the number of peak cells (Y == 1) in the
// batch, floored at 1.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace bofl {

enum class LossKind { SigmoidCE, Focal, PenaltyReducedFocal, ClassBalancedFocal, ClassWiseFocal, BOFL };

std::string_view to_string(LossKind kind);
std::optional<LossKind> parse_loss_kind(std::string_view name);

struct LossConfig {
  LossKind kind = LossKind::PenaltyReducedFocal;
  double gamma = 2.0;
  double prob_clamp_epsilon = 1e-12;
  double background_weight = 1.0;
  double penalty_beta = 4.0;

  // Throws ArgumentError on out-of-range fields.
  void validate() const;
};

struct BatchShape {
  size_t images = 0;  // K
  size_t classes = 0; // C
  size_t height = 0;
  size_t width = 0;

  size_t plane() const { return height * width; }
  size_t size() const { return images * classes * height * width; }
  bool operator==(const BatchShape&) const = default;
};

// Logits and targets laid out (K, C, H, W), row-major.
class HeatmapBatch {
 public:
  HeatmapBatch(BatchShape shape, std::vector<double> logits, std::vector<double> targets);

  // Builds the batch from probabilities in (0,1) (converted to logits).
  static HeatmapBatch from_probabilities(BatchShape shape, std::span<const double> probabilities,
                                         std::vector<double> targets);

  const BatchShape& shape() const { return shape_; }
  std::span<const double> logits() const { return logits_; }
  std::span<const double> targets() const { return targets_; }
  std::span<double> mutable_logits() { return logits_; }

  std::span<const double> logit_plane(size_t image, size_t cls) const;
  std::span<const double> target_plane(size_t image, size_t cls) const;

  std::vector<double> probabilities() const;

  // n_{i,k}: number of Y == 1 cells of class i in image k.
  int64_t peak_count(size_t cls, size_t image) const { return peaks_[cls * shape_.images + image]; }
  int64_t total_peaks() const { return total_peaks_; }
  // Normalizer used by every kernel: max(total_peaks, 1).
  double normalizer() const { return total_peaks_ > 0 ? static_cast<double>(total_peaks_) : 1.0; }

 private:
  BatchShape shape_;
  std::vector<double> logits_;
  std::vector<double> targets_;
  std::vector<int64_t> peaks_;  // (C, K)
  int64_t total_peaks_ = 0;
};

// Per-class, per-image weights w[i][k], shape (C, K).
class ClassImageWeights {
 public:
  ClassImageWeights() = default;
  ClassImageWeights(size_t classes, size_t images, double fill = 1.0)
      : classes_(classes), images_(images), values_(classes * images, fill) {}

  size_t classes() const { return classes_; }
  size_t images() const { return images_; }
  double& at(size_t cls, size_t image) { return values_[cls * images_ + image]; }
  double at(size_t cls, size_t image) const { return values_[cls * images_ + image]; }

 private:
  size_t classes_ = 0;
  size_t images_ = 0;
  std::vector<double> values_;
};

struct LossReport {
  double total = 0.0;
  std::vector<double> per_class;             // peak-cell contribution of each class channel
  std::vector<double> per_class_background;  // non-peak contribution of each class channel
  double background = 0.0;                   // sum of per_class_background
  std::vector<double> gradient;              // d total / d logit, (K, C, H, W)

  // Total contribution of one class channel (peak + non-peak cells).
  double channel(size_t cls) const { return per_class[cls] + per_class_background[cls]; }
  nlohmann::json to_json(bool include_gradient = false) const;
};

// p_t: p for a positive label, 1 - p otherwise.
double pt_transform(double p, bool positive);
// -(1 - p_t)^gamma log(p_t)
double focal_term(double p_t, double gamma);

// Binary focal loss: peaks positive, every other cell a plain negative.
LossReport focal(const HeatmapBatch& batch, const LossConfig& cfg);
// Focal loss with (1-Y)^penalty_beta attenuation of near-peak negatives.
LossReport penalty_reduced_focal(const HeatmapBatch& batch, const LossConfig& cfg);
// The gamma = 0 member of the penalty-reduced family.
LossReport sigmoid_ce(const HeatmapBatch& batch, const LossConfig& cfg);

// Per-sample weighting: every channel at a position holding a peak of class y
// is scaled by alphas[y] (the largest such alpha if several classes peak
// there); positions without a peak are scaled by cfg.background_weight.
LossReport class_balanced_focal(const HeatmapBatch& batch, std::span<const double> alphas,
                                const LossConfig& cfg);
// Channel i (peak and non-peak cells) scaled by alphas[i].
LossReport class_wise_focal(const HeatmapBatch& batch, std::span<const double> alphas,
                            const LossConfig& cfg);

// w[i][k] = alphas_scheduled[i] * eta_scheduled^{counts(i,k)}.
ClassImageWeights batch_balanced_weights(std::span<const double> alphas_scheduled,
                                         double eta_scheduled, const HeatmapBatch& counts);
ClassImageWeights batch_balanced_weights(std::span<const double> alphas_scheduled,
                                         double eta_scheduled,
                                         const std::vector<std::vector<int64_t>>& counts);

// Channel i of image k scaled by weights.at(i, k).
LossReport bofl(const HeatmapBatch& batch, const ClassImageWeights& weights, const LossConfig& cfg);

// Inputs the re-weighted kinds need; ignored by the others.
struct LossWeights {
  std::vector<double> alphas;   // ClassBalancedFocal, ClassWiseFocal
  ClassImageWeights per_image;  // BOFL
};

// Dispatches on cfg.kind.
LossReport compute_loss(const HeatmapBatch& batch, const LossWeights& weights,
                        const LossConfig& cfg);

struct GradCheckResult {
  double max_relative_error = 0.0;
  size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

using LossFunction = std::function<LossReport(const HeatmapBatch&)>;

// Central finite differences on every logit against the analytic gradient.
// Per-cell relative error is |a - n| / max(|a|, |n|), 0 where both vanish.
// `tamper`, if set, is applied to the analytic gradient before comparison
// (negative-control hook). Throws Error on a non-finite gradient and
// ArgumentError when perturbation is outside [1e-7, 1e-3].
GradCheckResult loss_gradient_check(const LossFunction& loss, const HeatmapBatch& batch,
                                    double perturbation,
                                    const std::function<void(std::vector<double>&)>& tamper = {});

// Max relative error accepted by the gradient check: 1e-6 for the smooth
// sigmoid cross-entropy, 1e-4 for every other kind.
double gradcheck_tolerance(LossKind kind);
// Default central-difference step per kind.
double gradcheck_perturbation(LossKind kind);

// Seeded random inputs of the re-weighted kinds: alphas (class-balanced,
// class-wise) or per-image weights (BOFL), uniform in [0.25, 3].
LossWeights seeded_weights(LossKind kind, const BatchShape& shape, uint64_t seed);
// compute_loss bound to seeded_weights.
LossFunction seeded_loss(LossKind kind, const BatchShape& shape, uint64_t seed,
                         LossConfig cfg = {});

// The batch total evaluated cell by cell in long double, independently of
// the kernels.
long double reference_total(const HeatmapBatch& batch, const LossWeights& weights,
                            const LossConfig& cfg);

// Analytic gradient of compute_loss against central differences of the
// long-double reference. Perturbing one logit changes exactly one cell term,
// so the difference is taken on that term alone; differencing the whole
// batch total in double would drown gradients below ~1e-8 of the total in
// rounding noise. Throws Error if the kernel total and the reference total
// disagree by more than 1e-10 relative, since the check would then compare
// against a different function.
GradCheckResult reference_gradient_check(const HeatmapBatch& batch, const LossWeights& weights,
                                         const LossConfig& cfg, double perturbation,
                                         const std::function<void(std::vector<double>&)>& tamper = {});

struct GradCheckSuiteResult {
  LossKind kind = LossKind::Focal;
  int trials = 0;
  double perturbation = 0.0;
  double tolerance = 0.0;
  double max_relative_error = 0.0;
  uint64_t worst_seed = 0;
  bool passed = false;
};

// `trials` random (2, 3, 8, 8) batches with seeds seed, seed + 1, ...
GradCheckSuiteResult gradcheck_suite(LossKind kind, uint64_t seed, int trials,
                                     std::optional<double> perturbation = std::nullopt,
                                     const std::function<void(std::vector<double>&)>& tamper = {});

// Random batch for tests and the gradcheck command: logits uniform in
// [-logit_range, logit_range], targets rendered from random peaks.
HeatmapBatch random_batch(BatchShape shape, uint64_t seed, double logit_range = 4.0,
                          double sigma = 1.0, int max_peaks_per_plane = 2);

}  // namespace bofl
