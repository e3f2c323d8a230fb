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

#include "bofl/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "bofl/error.hpp"

namespace bofl {

std::string_view to_string(ReweightKind kind) {
  switch (kind) {
    case ReweightKind::Constant:
      return "constant";
    case ReweightKind::Deferred:
      return "deferred";
    case ReweightKind::Linear:
      return "linear";
    case ReweightKind::LinearAfterDeferred:
      return "linear_after_deferred";
  }
  return "unknown";
}

std::string_view to_string(UpdateCycle cycle) {
  return cycle == UpdateCycle::PerEpoch ? "per_epoch" : "per_step";
}

std::string_view to_string(LrKind kind) {
  return kind == LrKind::CosineAnnealing ? "cosine" : "step_decay";
}

std::optional<ReweightKind> parse_reweight_kind(std::string_view name) {
  for (auto k : {ReweightKind::Constant, ReweightKind::Deferred, ReweightKind::Linear,
                 ReweightKind::LinearAfterDeferred}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::optional<UpdateCycle> parse_update_cycle(std::string_view name) {
  for (auto c : {UpdateCycle::PerEpoch, UpdateCycle::PerStep}) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

std::optional<LrKind> parse_lr_kind(std::string_view name) {
  for (auto k : {LrKind::CosineAnnealing, LrKind::StepDecay}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

void ScheduleSpec::validate() const {
  if (total_epochs < 1) throw ArgumentError("total_epochs must be >= 1");
  if (deferred_epochs < 0) throw ArgumentError("deferred_epochs must be >= 0");
  if (deferred_epochs >= total_epochs) {
    throw ArgumentError(fmt::format("deferred_epochs ({}) must be smaller than total_epochs ({})",
                                    deferred_epochs, total_epochs));
  }
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ArgumentError("base_lr must be > 0");
  if (warmup_iters < 0) throw ArgumentError("warmup_iters must be >= 0");
  if (!(intensity >= 0.0 && intensity <= 1.0)) throw ArgumentError("intensity must lie in [0, 1]");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ArgumentError("eta must lie in [0, 1]");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw ArgumentError("decay_factor must lie in (0, 1]");
  }
  for (int m : milestones) {
    if (m < 0) throw ArgumentError("milestones must be >= 0");
  }
}

std::vector<int> ScheduleSpec::effective_milestones() const {
  if (!milestones.empty()) {
    auto out = milestones;
    std::sort(out.begin(), out.end());
    return out;
  }
  return {static_cast<int>(std::lround(total_epochs * 90.0 / 140.0)),
          static_cast<int>(std::lround(total_epochs * 120.0 / 140.0))};
}

double normalized_epoch(int epoch, int step_in_epoch, int steps_per_epoch, const ScheduleSpec& spec) {
  if (epoch < 0 || epoch >= spec.total_epochs) {
    throw ArgumentError(
        fmt::format("epoch {} outside [0, {})", epoch, spec.total_epochs));
  }
  const bool per_step = spec.update_cycle == UpdateCycle::PerStep;
  if (per_step) {
    if (steps_per_epoch <= 0) throw ArgumentError("steps_per_epoch must be > 0 for per-step updates");
    if (step_in_epoch < 0 || step_in_epoch >= steps_per_epoch) {
      throw ArgumentError(fmt::format("step {} outside [0, {})", step_in_epoch, steps_per_epoch));
    }
  }
  const int d = spec.deferred_epochs;
  switch (spec.rw_kind) {
    case ReweightKind::Constant:
      return 1.0;
    case ReweightKind::Deferred:
      return epoch < d ? 0.0 : 1.0;
    case ReweightKind::Linear:
    case ReweightKind::LinearAfterDeferred: {
      const int start = spec.rw_kind == ReweightKind::Linear ? 0 : d;
      if (epoch < start) return 0.0;
      if (!per_step) {
        const int span = spec.total_epochs - 1 - start;
        return span == 0 ? 1.0 : static_cast<double>(epoch - start) / span;
      }
      const long long s = steps_per_epoch;
      const long long span = (spec.total_epochs - start) * s - 1;
      const long long at = (epoch - start) * s + step_in_epoch;
      return span == 0 ? 1.0 : static_cast<double>(at) / static_cast<double>(span);
    }
  }
  return 1.0;
}

double scheduled_alpha(double alpha, double lambda, double intensity) {
  return 1.0 + intensity * lambda * (alpha - 1.0);
}

double learning_rate(int iter, int total_iters, const ScheduleSpec& spec) {
  if (total_iters <= 0 || iter < 0 || iter >= total_iters) {
    throw ArgumentError(fmt::format("iteration {} outside [0, {})", iter, total_iters));
  }
  const int warm = spec.warmup_iters;
  if (iter < warm) return spec.base_lr * static_cast<double>(iter) / warm;

  if (spec.lr_kind == LrKind::CosineAnnealing) {
    const int span = total_iters - 1 - warm;
    // With nothing left to anneal over, the single post-warmup step runs at base_lr.
    const double progress = span > 0 ? static_cast<double>(iter - warm) / span : 0.0;
    return spec.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
  const double steps_per_epoch = static_cast<double>(total_iters) / spec.total_epochs;
  const int epoch = static_cast<int>(std::floor(iter / steps_per_epoch));
  double lr = spec.base_lr;
  for (int m : spec.effective_milestones()) {
    if (epoch >= m) lr *= spec.decay_factor;
  }
  return lr;
}

EffectiveStepTrace effective_step_trace(const std::vector<double>& alphas, const ScheduleSpec& spec,
                                        int total_iters) {
  spec.validate();
  if (total_iters <= 0 || total_iters % spec.total_epochs != 0) {
    throw ArgumentError(fmt::format("total_iters ({}) must be a positive multiple of total_epochs ({})",
                                    total_iters, spec.total_epochs));
  }
  const int steps = total_iters / spec.total_epochs;
  EffectiveStepTrace trace;
  trace.alpha_hat.assign(alphas.size(), std::vector<double>(total_iters));
  trace.step.assign(alphas.size(), std::vector<double>(total_iters));
  for (int t = 0; t < total_iters; ++t) {
    TracePoint pt;
    pt.iter = t;
    pt.lr = learning_rate(t, total_iters, spec);
    pt.lambda = normalized_epoch(t / steps, t % steps, steps, spec);
    for (size_t i = 0; i < alphas.size(); ++i) {
      const double a = scheduled_alpha(alphas[i], pt.lambda, spec.intensity);
      trace.alpha_hat[i][t] = a;
      trace.step[i][t] = pt.lr * a;
    }
    trace.points.push_back(pt);
  }
  return trace;
}

}  // namespace bofl
