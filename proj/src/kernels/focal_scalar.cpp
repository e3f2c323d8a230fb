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

#include "bofl/kernels.hpp"

namespace bofl::kernels::scalar {

PlaneSums focal_plane(const FocalParams& params, const PlaneArgs& args) {
  const size_t n = args.logits.size();
  const bool per_cell = !args.cell_weights.empty();
  const bool want_grad = !args.grad.empty();
  const double gamma = params.gamma;
  const double lo = params.epsilon;
  const double hi = 1.0 - params.epsilon;

  PlaneSums sums;
  for (size_t c = 0; c < n; ++c) {
    const double w = per_cell ? args.cell_weights[c] : args.uniform_weight;
    const double y = args.targets[c];
    const double p = std::clamp(1.0 / (1.0 + std::exp(-args.logits[c])), lo, hi);
    const double q = 1.0 - p;
    double loss, g;
    if (y == 1.0) {
      const double log_p = std::log(p);
      const double mod = std::pow(q, gamma);
      loss = -mod * log_p;
      g = mod * (gamma * p * log_p - q);
      sums.foreground += w * loss;
    } else {
      const double log_q = std::log(q);
      const double mod = std::pow(p, gamma);
      const double pen = std::pow(1.0 - y, params.penalty_beta);
      loss = -pen * mod * log_q;
      g = pen * mod * (p - gamma * q * log_q);
      sums.background += w * loss;
    }
    if (want_grad) args.grad[c] = w * g * args.grad_scale;
  }
  return sums;
}

void sigmoid_plane(std::span<const double> logits, std::span<double> out) {
  for (size_t i = 0; i < logits.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-logits[i]));
}

}  // namespace bofl::kernels::scalar
