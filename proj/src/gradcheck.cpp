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

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "bofl/error.hpp"
#include "bofl/losses.hpp"
#include "bofl/synth.hpp"

namespace bofl {

GradCheckResult loss_gradient_check(const LossFunction& loss, const HeatmapBatch& batch,
                                    double perturbation,
                                    const std::function<void(std::vector<double>&)>& tamper) {
  if (!(perturbation >= 1e-7 && perturbation <= 1e-3)) {
    throw ArgumentError(fmt::format("perturbation must lie in [1e-7, 1e-3], got {}", perturbation));
  }
  std::vector<double> analytic = loss(batch).gradient;
  if (tamper) tamper(analytic);
  for (size_t i = 0; i < analytic.size(); ++i) {
    if (!std::isfinite(analytic[i])) {
      throw Error(fmt::format("non-finite analytic gradient at cell {}", i));
    }
  }

  HeatmapBatch probe = batch;
  auto logits = probe.mutable_logits();
  GradCheckResult result;
  for (size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    logits[i] = z + perturbation;
    const double up = loss(probe).total;
    logits[i] = z - perturbation;
    const double down = loss(probe).total;
    logits[i] = z;
    const double numeric = (up - down) / (2.0 * perturbation);
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
    const double err = scale > 0.0 ? std::abs(analytic[i] - numeric) / scale : 0.0;
    if (i == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.analytic_at_worst = analytic[i];
      result.numeric_at_worst = numeric;
    }
  }
  return result;
}

double gradcheck_tolerance(LossKind kind) { return kind == LossKind::SigmoidCE ? 1e-6 : 1e-4; }

double gradcheck_perturbation(LossKind) { return 1e-5; }

LossWeights seeded_weights(LossKind kind, const BatchShape& shape, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xA1FA5ULL);
  std::uniform_real_distribution<double> w(0.25, 3.0);
  LossWeights weights;
  if (kind == LossKind::ClassBalancedFocal || kind == LossKind::ClassWiseFocal) {
    for (size_t i = 0; i < shape.classes; ++i) weights.alphas.push_back(w(rng));
  }
  if (kind == LossKind::BOFL) {
    weights.per_image = ClassImageWeights(shape.classes, shape.images);
    for (size_t i = 0; i < shape.classes; ++i) {
      for (size_t k = 0; k < shape.images; ++k) weights.per_image.at(i, k) = w(rng);
    }
  }
  return weights;
}

LossFunction seeded_loss(LossKind kind, const BatchShape& shape, uint64_t seed, LossConfig cfg) {
  cfg.kind = kind;
  return [weights = seeded_weights(kind, shape, seed), cfg](const HeatmapBatch& b) {
    return compute_loss(b, weights, cfg);
  };
}

namespace {

struct CellModel {
  long double gamma;
  long double beta;
  long double eps;
};

CellModel cell_model(const LossConfig& cfg) {
  CellModel m{cfg.gamma, cfg.penalty_beta, cfg.prob_clamp_epsilon};
  if (cfg.kind == LossKind::SigmoidCE) m.gamma = 0.0L;
  if (cfg.kind == LossKind::Focal) m.beta = 0.0L;
  return m;
}

long double cell_term(const CellModel& m, long double z, double y) {
  long double p = 1.0L / (1.0L + std::exp(-z));
  p = std::clamp(p, m.eps, 1.0L - m.eps);
  const long double q = 1.0L - p;
  if (y == 1.0) return -std::pow(q, m.gamma) * std::log(p);
  return -std::pow(1.0L - static_cast<long double>(y), m.beta) * std::pow(p, m.gamma) * std::log(q);
}

// Weight of every cell, (K, C, H, W).
std::vector<double> cell_weights(const HeatmapBatch& batch, const LossWeights& weights,
                                 const LossConfig& cfg) {
  const BatchShape& s = batch.shape();
  const size_t plane = s.plane();
  std::vector<double> w(s.size(), 1.0);
  auto idx = [&](size_t k, size_t i, size_t c) { return (k * s.classes + i) * plane + c; };
  switch (cfg.kind) {
    case LossKind::ClassBalancedFocal:
      if (weights.alphas.size() != s.classes) throw ShapeError("alphas do not match the class count");
      for (size_t k = 0; k < s.images; ++k) {
        for (size_t c = 0; c < plane; ++c) {
          double pw = -1.0;
          for (size_t i = 0; i < s.classes; ++i) {
            if (batch.targets()[idx(k, i, c)] == 1.0) pw = std::max(pw, weights.alphas[i]);
          }
          if (pw < 0.0) pw = cfg.background_weight;
          for (size_t i = 0; i < s.classes; ++i) w[idx(k, i, c)] = pw;
        }
      }
      break;
    case LossKind::ClassWiseFocal:
      if (weights.alphas.size() != s.classes) throw ShapeError("alphas do not match the class count");
      for (size_t k = 0; k < s.images; ++k) {
        for (size_t i = 0; i < s.classes; ++i) {
          std::fill_n(w.begin() + idx(k, i, 0), plane, weights.alphas[i]);
        }
      }
      break;
    case LossKind::BOFL:
      if (weights.per_image.classes() != s.classes || weights.per_image.images() != s.images) {
        throw ShapeError("per-image weights do not match the batch");
      }
      for (size_t k = 0; k < s.images; ++k) {
        for (size_t i = 0; i < s.classes; ++i) {
          std::fill_n(w.begin() + idx(k, i, 0), plane, weights.per_image.at(i, k));
        }
      }
      break;
    default:
      break;
  }
  return w;
}

}  // namespace

long double reference_total(const HeatmapBatch& batch, const LossWeights& weights,
                            const LossConfig& cfg) {
  const CellModel m = cell_model(cfg);
  const auto w = cell_weights(batch, weights, cfg);
  const auto z = batch.logits();
  const auto y = batch.targets();
  long double sum = 0.0L;
  for (size_t j = 0; j < z.size(); ++j) sum += w[j] * cell_term(m, z[j], y[j]);
  return sum / static_cast<long double>(batch.normalizer());
}

GradCheckResult reference_gradient_check(const HeatmapBatch& batch, const LossWeights& weights,
                                         const LossConfig& cfg, double perturbation,
                                         const std::function<void(std::vector<double>&)>& tamper) {
  if (!(perturbation >= 1e-7 && perturbation <= 1e-3)) {
    throw ArgumentError(fmt::format("perturbation must lie in [1e-7, 1e-3], got {}", perturbation));
  }
  const LossReport report = compute_loss(batch, weights, cfg);
  const long double ref = reference_total(batch, weights, cfg);
  const long double gap = std::abs(static_cast<long double>(report.total) - ref);
  if (gap > 1e-10L * std::max(std::abs(ref), 1e-300L)) {
    throw Error(fmt::format("kernel total {} disagrees with the reference total {}", report.total,
                            static_cast<double>(ref)));
  }
  std::vector<double> analytic = report.gradient;
  if (tamper) tamper(analytic);
  for (size_t i = 0; i < analytic.size(); ++i) {
    if (!std::isfinite(analytic[i])) {
      throw Error(fmt::format("non-finite analytic gradient at cell {}", i));
    }
  }
  const CellModel m = cell_model(cfg);
  const auto w = cell_weights(batch, weights, cfg);
  const auto z = batch.logits();
  const auto y = batch.targets();
  const long double h = perturbation;
  const long double norm = batch.normalizer();
  GradCheckResult result;
  for (size_t i = 0; i < z.size(); ++i) {
    const long double up = cell_term(m, z[i] + h, y[i]);
    const long double down = cell_term(m, z[i] - h, y[i]);
    const double numeric = static_cast<double>(w[i] * (up - down) / (2.0L * h) / norm);
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
    const double err = scale > 0.0 ? std::abs(analytic[i] - numeric) / scale : 0.0;
    if (i == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.analytic_at_worst = analytic[i];
      result.numeric_at_worst = numeric;
    }
  }
  return result;
}

GradCheckSuiteResult gradcheck_suite(LossKind kind, uint64_t seed, int trials,
                                     std::optional<double> perturbation,
                                     const std::function<void(std::vector<double>&)>& tamper) {
  if (trials < 1) throw ArgumentError("gradient check needs at least one trial");
  GradCheckSuiteResult r;
  r.kind = kind;
  r.trials = trials;
  r.perturbation = perturbation.value_or(gradcheck_perturbation(kind));
  r.tolerance = gradcheck_tolerance(kind);
  const BatchShape shape{2, 3, 8, 8};
  for (int t = 0; t < trials; ++t) {
    const uint64_t s = seed + static_cast<uint64_t>(t);
    const HeatmapBatch batch = random_batch(shape, s);
    LossConfig cfg;
    cfg.kind = kind;
    const auto res =
        reference_gradient_check(batch, seeded_weights(kind, shape, s), cfg, r.perturbation, tamper);
    if (t == 0 || res.max_relative_error > r.max_relative_error) {
      r.max_relative_error = res.max_relative_error;
      r.worst_seed = s;
    }
  }
  r.passed = r.max_relative_error <= r.tolerance;
  return r;
}

HeatmapBatch random_batch(BatchShape shape, uint64_t seed, double logit_range, double sigma,
                          int max_peaks_per_plane) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> logit(-logit_range, logit_range);
  std::uniform_int_distribution<int> peaks(0, max_peaks_per_plane);
  std::uniform_int_distribution<int> col(0, static_cast<int>(shape.width) - 1);
  std::uniform_int_distribution<int> row(0, static_cast<int>(shape.height) - 1);

  std::vector<double> logits(shape.size());
  for (auto& z : logits) z = logit(rng);

  std::vector<double> targets;
  targets.reserve(shape.size());
  for (size_t k = 0; k < shape.images; ++k) {
    std::vector<GridObject> objects;
    for (size_t i = 0; i < shape.classes; ++i) {
      const int n = peaks(rng);
      for (int j = 0; j < n; ++j) {
        GridObject obj;
        obj.cls = static_cast<int>(i);
        obj.cx = col(rng);
        obj.cy = row(rng);
        objects.push_back(obj);
      }
    }
    const auto y = render_heatmap(objects, static_cast<int>(shape.classes),
                                  static_cast<int>(shape.height), static_cast<int>(shape.width),
                                  sigma);
    targets.insert(targets.end(), y.begin(), y.end());
  }
  return HeatmapBatch(shape, std::move(logits), std::move(targets));
}

}  // namespace bofl
