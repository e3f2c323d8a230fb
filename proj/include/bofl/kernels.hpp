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

// Per-plane loss kernels. One plane is the H*W grid of a single class channel
// of a single image. Every kernel has a scalar reference implementation and,
// on x86-64, an AVX2/FMA variant; the dispatching entry points pick the
// variant once at startup from the CPU features (override with the
// environment variable BOFL_SIMD=scalar|avx2).
//
// Cell model, with p = clamp(sigmoid(z), eps, 1 - eps):
//   peak (Y == 1):   loss = -(1-p)^gamma log p
//   otherwise:       loss = -(1-Y)^beta p^gamma log(1-p)
// Each cell's loss is multiplied by its weight. The gradient written out is
// d(weight * loss)/dz * grad_scale, with the clamp treated as identity so that
// saturated cells still receive a finite, nonzero gradient.

#pragma once

#include <span>
#include <string_view>

namespace bofl::kernels {

struct FocalParams {
  double gamma = 2.0;
  double penalty_beta = 4.0;
  double epsilon = 1e-12;
};

struct PlaneSums {
  double foreground = 0.0;  // weighted loss over peak cells
  double background = 0.0;  // weighted loss over every other cell
};

// `cell_weights` is either empty (use `uniform_weight` everywhere) or has one
// entry per cell. `grad` is either empty (loss only) or one entry per cell.
struct PlaneArgs {
  std::span<const double> logits;
  std::span<const double> targets;
  std::span<const double> cell_weights;
  double uniform_weight = 1.0;
  double grad_scale = 1.0;
  std::span<double> grad;
};

enum class SimdLevel { Scalar, Avx2 };

std::string_view to_string(SimdLevel level);

// Highest level supported by both the build and the running CPU.
SimdLevel detected_level();
// Level currently used by the dispatching entry points.
SimdLevel active_level();
// Force a level (for tests and benchmarks). Returns false and leaves the
// active level unchanged if `level` is not available.
bool set_active_level(SimdLevel level);

PlaneSums focal_plane(const FocalParams& params, const PlaneArgs& args);
// out[i] = sigmoid(logits[i]), no clamping.
void sigmoid_plane(std::span<const double> logits, std::span<double> out);

namespace scalar {
PlaneSums focal_plane(const FocalParams& params, const PlaneArgs& args);
void sigmoid_plane(std::span<const double> logits, std::span<double> out);
}  // namespace scalar

#if defined(BOFL_HAVE_AVX2)
namespace avx2 {
PlaneSums focal_plane(const FocalParams& params, const PlaneArgs& args);
void sigmoid_plane(std::span<const double> logits, std::span<double> out);
}  // namespace avx2
#endif

}  // namespace bofl::kernels
