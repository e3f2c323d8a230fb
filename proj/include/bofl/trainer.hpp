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

// Deterministic toy trainer: a per-class linear + sigmoid classifier over the
// synthetic cell features, trained by plain gradient descent with any loss
// kernel, re-weighting schedule and learning-rate schedule.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bofl/eval.hpp"
#include "bofl/losses.hpp"
#include "bofl/schedules.hpp"
#include "bofl/stats.hpp"
#include "bofl/synth.hpp"

namespace bofl {

enum class WeightingSource { None, EffectiveNumber, InverseFrequency };

std::string_view to_string(WeightingSource source);
std::optional<WeightingSource> parse_weighting_source(std::string_view name);

struct TrainConfig {
  int epochs = 30;
  int batch_images = 8;
  ScheduleSpec schedule;  // schedule.total_epochs must equal epochs
  LossConfig loss;
  WeightingSource weighting = WeightingSource::None;
  double effnum_beta = 0.999;
  std::optional<double> bias_prior_pi;
  uint64_t seed = 1;
  double init_std = 0.01;
  double peak_threshold = 0.5;
  // When set, eval reports carry the head/tail recall gap for this split.
  std::optional<double> tail_ratio;

  // Throws ValidationError listing every violation.
  void validate() const;
};

// logit_c(x) = weights[c] . x + bias[c]. Background cells have the zero
// feature, so their logit is the bias.
struct LinearModel {
  int classes = 0;
  int feature_dim = 0;
  std::vector<double> weights;  // (C, F)
  std::vector<double> bias;     // (C)

  double logit(int cls, std::span<const double> feature) const;
  // Flattened (C, F + 1) with the bias in the last column.
  std::vector<float> packed() const;
};

// -log((1 - pi) / pi)
double prior_bias(double pi);

LinearModel init_model(const SynthSpec& spec, const TrainConfig& cfg);

// params - lr * gradient. Throws ArgumentError on shape mismatch or
// non-finite inputs.
void gradient_descent_step(std::span<double> params, std::span<const double> gradient, double lr);

// Image order of one epoch, split into batches. Pure function of its inputs.
std::vector<std::vector<size_t>> epoch_batches(uint64_t seed, int epoch, size_t images,
                                               int batch_images);

// Logits of the model on the given images with their rendered targets.
HeatmapBatch build_batch(const LinearModel& model, const SynthDataset& dataset,
                         std::span<const size_t> image_indices);

EvalReport evaluate(const LinearModel& model, const SynthDataset& heldout, double peak_threshold,
                    const std::vector<bool>& is_tail = {});

struct StepRecord {
  int iter = 0;
  int epoch = 0;
  double lr = 0.0;
  double lambda = 0.0;
  double loss = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double lambda = 0.0;  // at the last step of the epoch
  double lr = 0.0;      // at the last step of the epoch
  double loss = 0.0;    // mean step loss
  std::vector<double> alpha_hat;
  double eta_hat = 1.0;
  EvalReport eval;
};

struct TrainLog {
  std::string label;
  uint64_t dataset_seed = 0;
  uint64_t train_seed = 0;
  std::vector<int64_t> class_ids;
  WeightingFactors weighting;
  LinearModel initial_model;
  LinearModel model;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  RunSummary summary() const;
};

// Throws DivergenceError when the loss becomes non-finite or exceeds 1e6.
TrainLog train(const SynthDataset& train_set, const SynthDataset& heldout, const TrainConfig& cfg);

// epoch,lambda,lr,loss,recall_<id>...,min_class_recall,macro_recall
void write_epoch_csv(std::ostream& out, const TrainLog& log);
// iter,epoch,lr,lambda,loss
void write_steps_csv(std::ostream& out, const TrainLog& log);
// epoch,class_id,alpha_hat,eta_hat
void write_weights_csv(std::ostream& out, const TrainLog& log);
void write_model(const std::filesystem::path& path, const LinearModel& model);

}  // namespace bofl
