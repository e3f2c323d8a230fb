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

// Re-weighting schedules (how fast the class weights move from 1 to their
// target) and learning-rate schedules, plus the combined "effective step"
// trace lr(t) * alpha_hat(t).

#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace bofl {

enum class ReweightKind { Constant, Deferred, Linear, LinearAfterDeferred };
enum class UpdateCycle { PerEpoch, PerStep };
enum class LrKind { CosineAnnealing, StepDecay };

std::string_view to_string(ReweightKind kind);
std::string_view to_string(UpdateCycle cycle);
std::string_view to_string(LrKind kind);
std::optional<ReweightKind> parse_reweight_kind(std::string_view name);
std::optional<UpdateCycle> parse_update_cycle(std::string_view name);
std::optional<LrKind> parse_lr_kind(std::string_view name);

struct ScheduleSpec {
  ReweightKind rw_kind = ReweightKind::LinearAfterDeferred;
  int deferred_epochs = 5;
  UpdateCycle update_cycle = UpdateCycle::PerEpoch;
  int total_epochs = 140;
  LrKind lr_kind = LrKind::CosineAnnealing;
  double base_lr = 5e-4;
  int warmup_iters = 500;
  double intensity = 1.0;
  double eta = 0.8;
  // Step-decay milestones in epochs; empty means 90/140 and 120/140 of
  // total_epochs (rounded), i.e. exactly {90, 120} for 140 epochs.
  std::vector<int> milestones;
  double decay_factor = 0.1;

  // Throws ArgumentError describing the first violated constraint.
  void validate() const;
  std::vector<int> effective_milestones() const;
};

// Schedule progress lambda in [0, 1]. `step_in_epoch` is only used for
// PerStep. Throws ArgumentError for out-of-range epochs or a zero
// steps_per_epoch with PerStep.
double normalized_epoch(int epoch, int step_in_epoch, int steps_per_epoch, const ScheduleSpec& spec);

// 1 + intensity * lambda * (alpha - 1)
double scheduled_alpha(double alpha, double lambda, double intensity);

// Linear warmup from 0 over warmup_iters, then cosine annealing to 0 at the
// final iteration, or step decay at the milestone epochs.
double learning_rate(int iter, int total_iters, const ScheduleSpec& spec);

struct TracePoint {
  int iter = 0;
  double lr = 0.0;
  double lambda = 0.0;
};

struct EffectiveStepTrace {
  std::vector<TracePoint> points;             // one per iteration
  std::vector<std::vector<double>> alpha_hat; // [class][iter]
  std::vector<std::vector<double>> step;      // [class][iter] = lr * alpha_hat
};

// total_iters must be a positive multiple of spec.total_epochs.
EffectiveStepTrace effective_step_trace(const std::vector<double>& alphas, const ScheduleSpec& spec,
                                        int total_iters);

}  // namespace bofl
