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


// Independent per-cell reference implementations used as test oracles. They
// are written directly from the cell formulas, in long double, and share no
// code with the library kernels.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "bofl/losses.hpp"

namespace oracle {

struct CellModel {
  long double gamma = 2.0L;
  long double beta = 4.0L;  // (1 - Y)^beta on non-peak cells
  long double eps = 1e-12L;
};

inline CellModel model_for(const bofl::LossConfig& cfg) {
  CellModel m{cfg.gamma, cfg.penalty_beta, cfg.prob_clamp_epsilon};
  if (cfg.kind == bofl::LossKind::Focal) m.beta = 0.0L;
  if (cfg.kind == bofl::LossKind::SigmoidCE) m.gamma = 0.0L;
  return m;
}

inline long double clamped_sigmoid(long double z, long double eps) {
  const long double p = 1.0L / (1.0L + std::exp(-z));
  return std::clamp(p, eps, 1.0L - eps);
}

inline long double cell_loss(const CellModel& m, long double z, long double y) {
  const long double p = clamped_sigmoid(z, m.eps);
  const long double q = 1.0L - p;
  if (y == 1.0L) return -std::pow(q, m.gamma) * std::log(p);
  return -std::pow(1.0L - y, m.beta) * std::pow(p, m.gamma) * std::log(q);
}

// d loss / d z with the clamp passed straight through.
inline long double cell_grad(const CellModel& m, long double z, long double y) {
  const long double p = clamped_sigmoid(z, m.eps);
  const long double q = 1.0L - p;
  if (y == 1.0L) return m.gamma * p * std::pow(q, m.gamma) * std::log(p) - std::pow(q, m.gamma + 1.0L);
  const long double pen = std::pow(1.0L - y, m.beta);
  return -pen * (m.gamma * std::pow(p, m.gamma) * q * std::log(q) - std::pow(p, m.gamma + 1.0L));
}

// Weight of every cell (K, C, H, W) for the given kind.
inline std::vector<long double> cell_weights(const bofl::HeatmapBatch& b, const bofl::LossWeights& w,
                                             const bofl::LossConfig& cfg) {
  const auto& s = b.shape();
  std::vector<long double> out(s.size(), 1.0L);
  const auto y = b.targets();
  for (size_t k = 0; k < s.images; ++k) {
    for (size_t pos = 0; pos < s.plane(); ++pos) {
      long double cb = -1.0L;
      for (size_t i = 0; i < s.classes; ++i) {
        if (y[(k * s.classes + i) * s.plane() + pos] == 1.0) {
          cb = std::max(cb, static_cast<long double>(w.alphas.empty() ? 1.0 : w.alphas[i]));
        }
      }
      for (size_t i = 0; i < s.classes; ++i) {
        const size_t idx = (k * s.classes + i) * s.plane() + pos;
        switch (cfg.kind) {
          case bofl::LossKind::ClassBalancedFocal:
            out[idx] = cb >= 0.0L ? cb : static_cast<long double>(cfg.background_weight);
            break;
          case bofl::LossKind::ClassWiseFocal:
            out[idx] = w.alphas[i];
            break;
          case bofl::LossKind::BOFL:
            out[idx] = w.per_image.at(i, k);
            break;
          default:
            break;
        }
      }
    }
  }
  return out;
}

struct Result {
  long double total = 0.0L;
  std::vector<long double> gradient;
};

inline Result brute_force(const bofl::HeatmapBatch& b, const bofl::LossWeights& w,
                          const bofl::LossConfig& cfg) {
  const CellModel m = model_for(cfg);
  const auto weights = cell_weights(b, w, cfg);
  long double peaks = 0.0L;
  for (double y : b.targets()) peaks += (y == 1.0) ? 1.0L : 0.0L;
  const long double n = std::max(peaks, 1.0L);
  Result r;
  r.gradient.resize(b.shape().size());
  for (size_t c = 0; c < b.shape().size(); ++c) {
    const long double z = b.logits()[c];
    const long double y = b.targets()[c];
    r.total += weights[c] * cell_loss(m, z, y);
    r.gradient[c] = weights[c] * cell_grad(m, z, y) / n;
  }
  r.total /= n;
  return r;
}

inline double rel(long double a, long double b) {
  const long double d = std::fabs(a - b);
  const long double s = std::max(std::fabs(a), std::fabs(b));
  return s == 0.0L ? 0.0 : static_cast<double>(d / s);
}

// Max relative gradient error, relative to the largest gradient magnitude so
// that cells whose gradient is pure roundoff do not dominate.
inline double max_grad_error(const std::vector<double>& got, const std::vector<long double>& want) {
  long double scale = 0.0L;
  for (auto g : want) scale = std::max(scale, std::fabs(g));
  long double worst = 0.0L;
  for (size_t i = 0; i < got.size(); ++i) {
    const long double d = std::fabs(static_cast<long double>(got[i]) - want[i]);
    const long double s = std::max(std::fabs(want[i]), scale * 1e-6L);
    if (s > 0.0L) worst = std::max(worst, d / s);
  }
  return static_cast<double>(worst);
}

}  // namespace oracle
