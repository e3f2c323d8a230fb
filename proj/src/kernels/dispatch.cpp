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

#include <atomic>
#include <cstdlib>
#include <string>

#include "bofl/kernels.hpp"

namespace bofl::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(BOFL_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

SimdLevel initial_level() {
  const SimdLevel detected = detected_level();
  if (const char* env = std::getenv("BOFL_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return SimdLevel::Scalar;
  }
  return detected;
}

std::atomic<SimdLevel>& level_slot() {
  static std::atomic<SimdLevel> level{initial_level()};
  return level;
}

}  // namespace

std::string_view to_string(SimdLevel level) {
  switch (level) {
    case SimdLevel::Scalar:
      return "scalar";
    case SimdLevel::Avx2:
      return "avx2";
  }
  return "unknown";
}

SimdLevel detected_level() {
  static const SimdLevel level = cpu_has_avx2() ? SimdLevel::Avx2 : SimdLevel::Scalar;
  return level;
}

SimdLevel active_level() { return level_slot().load(std::memory_order_relaxed); }

bool set_active_level(SimdLevel level) {
  if (level == SimdLevel::Avx2 && detected_level() != SimdLevel::Avx2) return false;
  level_slot().store(level, std::memory_order_relaxed);
  return true;
}

PlaneSums focal_plane(const FocalParams& params, const PlaneArgs& args) {
#if defined(BOFL_HAVE_AVX2)
  if (active_level() == SimdLevel::Avx2) return avx2::focal_plane(params, args);
#endif
  return scalar::focal_plane(params, args);
}

void sigmoid_plane(std::span<const double> logits, std::span<double> out) {
#if defined(BOFL_HAVE_AVX2)
  if (active_level() == SimdLevel::Avx2) return avx2::sigmoid_plane(logits, out);
#endif
  scalar::sigmoid_plane(logits, out);
}

}  // namespace bofl::kernels
