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

// AVX2/FMA variants of the plane kernels. Compiled with -mavx2 -mfma; only
// reached through the dispatcher after a CPU feature check.

#include <immintrin.h>

#include <algorithm>

#include "bofl/kernels.hpp"

namespace bofl::kernels::avx2 {

namespace {

constexpr size_t kLanes = 4;

inline __m256d polevl(__m256d x, const double* coef, int degree) {
  __m256d r = _mm256_set1_pd(coef[0]);
  for (int i = 1; i <= degree; ++i) r = _mm256_fmadd_pd(r, x, _mm256_set1_pd(coef[i]));
  return r;
}

// Monic leading coefficient omitted from `coef`.
inline __m256d p1evl(__m256d x, const double* coef, int degree) {
  __m256d r = _mm256_add_pd(x, _mm256_set1_pd(coef[0]));
  for (int i = 1; i < degree; ++i) r = _mm256_fmadd_pd(r, x, _mm256_set1_pd(coef[i]));
  return r;
}

// Cephes-style exp, ~1 ulp over the clamped range.
inline __m256d exp_pd(__m256d x) {
  static constexpr double kP[] = {1.26177193074810590878E-4, 3.02994407707441961300E-2,
                                  9.99999999999999999910E-1};
  static constexpr double kQ[] = {3.00198505138664455042E-6, 2.52448340349684104192E-3,
                                  2.27265548208155028766E-1, 2.00000000000000000009E0};
  x = _mm256_min_pd(x, _mm256_set1_pd(709.0));
  x = _mm256_max_pd(x, _mm256_set1_pd(-708.0));

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634073599)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125E-1), x);
  x = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212E-6), x);

  const __m256d xx = _mm256_mul_pd(x, x);
  const __m256d px = _mm256_mul_pd(x, polevl(xx, kP, 2));
  const __m256d qx = polevl(xx, kQ, 3);
  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_fmadd_pd(_mm256_set1_pd(2.0), r, _mm256_set1_pd(1.0));

  __m256i e = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n));
  e = _mm256_slli_epi64(_mm256_add_epi64(e, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(r, _mm256_castsi256_pd(e));
}

// Cephes-style natural log for finite x > 0 (normal range), ~1 ulp.
inline __m256d log_pd(__m256d x) {
  static constexpr double kP[] = {1.01875663804580931796E-4, 4.97494994976747001425E-1,
                                  4.70579119878881725854E0,  1.44989225341610930846E1,
                                  1.79368678507819816313E1,  7.70838733755885391666E0};
  static constexpr double kQ[] = {1.12873587189167450590E1, 4.52279145837532221105E1,
                                  8.29875266912776603211E1, 7.11544750618563894466E1,
                                  2.31251620126765340583E1};

  const __m256i bits = _mm256_castpd_si256(x);
  // Exponent of x as a double via the 2^52 magic-number trick.
  const __m256i raw_exp = _mm256_srli_epi64(bits, 52);
  const __m256d magic = _mm256_set1_pd(4503599627370496.0);
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(raw_exp, _mm256_castpd_si256(magic))),
                            magic);
  e = _mm256_sub_pd(e, _mm256_set1_pd(1022.0));

  // Mantissa in [0.5, 1).
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(
      _mm256_and_si256(bits, _mm256_set1_epi64x(0x000fffffffffffffLL)),
      _mm256_set1_epi64x(0x3fe0000000000000LL)));

  const __m256d small = _mm256_cmp_pd(m, _mm256_set1_pd(0.70710678118654752440), _CMP_LT_OQ);
  e = _mm256_sub_pd(e, _mm256_and_pd(small, _mm256_set1_pd(1.0)));
  m = _mm256_sub_pd(_mm256_add_pd(m, _mm256_and_pd(small, m)), _mm256_set1_pd(1.0));

  const __m256d z = _mm256_mul_pd(m, m);
  __m256d y = _mm256_div_pd(_mm256_mul_pd(_mm256_mul_pd(m, z), polevl(m, kP, 5)), p1evl(m, kQ, 5));
  y = _mm256_fnmadd_pd(e, _mm256_set1_pd(2.121944400546905827679e-4), y);
  y = _mm256_fnmadd_pd(_mm256_set1_pd(0.5), z, y);
  __m256d r = _mm256_add_pd(m, y);
  return _mm256_fmadd_pd(e, _mm256_set1_pd(0.693359375), r);
}

inline __m256d sigmoid_pd(__m256d z) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d t = exp_pd(_mm256_sub_pd(_mm256_setzero_pd(), z));
  return _mm256_div_pd(one, _mm256_add_pd(one, t));
}

struct Lane {
  __m256d fg;
  __m256d bg;
  __m256d grad;
};

inline Lane cell_block(__m256d z, __m256d y, __m256d w, __m256d gamma, __m256d beta, __m256d lo,
                       __m256d hi, __m256d scale) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  __m256d p = sigmoid_pd(z);
  p = _mm256_min_pd(_mm256_max_pd(p, lo), hi);
  const __m256d q = _mm256_sub_pd(one, p);
  const __m256d log_p = log_pd(p);
  const __m256d log_q = log_pd(q);

  const __m256d peak = _mm256_cmp_pd(y, one, _CMP_EQ_OQ);
  // Peak lanes: (1-p)^gamma; others: p^gamma.
  const __m256d mod = exp_pd(_mm256_mul_pd(gamma, _mm256_blendv_pd(log_p, log_q, peak)));
  // (1-Y)^beta on non-peak lanes, 1 on peaks.
  const __m256d one_minus_y = _mm256_blendv_pd(_mm256_sub_pd(one, y), one, peak);
  const __m256d pen = exp_pd(_mm256_mul_pd(beta, log_pd(one_minus_y)));

  const __m256d loss_fg = _mm256_sub_pd(zero, _mm256_mul_pd(mod, log_p));
  const __m256d loss_bg = _mm256_sub_pd(zero, _mm256_mul_pd(_mm256_mul_pd(pen, mod), log_q));
  // g_fg = mod * (gamma p log p - q); g_bg = pen * mod * (p - gamma q log q)
  const __m256d g_fg = _mm256_mul_pd(mod, _mm256_fmsub_pd(_mm256_mul_pd(gamma, p), log_p, q));
  const __m256d g_bg =
      _mm256_mul_pd(_mm256_mul_pd(pen, mod), _mm256_fnmadd_pd(_mm256_mul_pd(gamma, q), log_q, p));

  Lane out;
  out.fg = _mm256_and_pd(peak, _mm256_mul_pd(w, loss_fg));
  out.bg = _mm256_andnot_pd(peak, _mm256_mul_pd(w, loss_bg));
  out.grad = _mm256_mul_pd(_mm256_mul_pd(w, _mm256_blendv_pd(g_bg, g_fg, peak)), scale);
  return out;
}

inline double hsum(__m256d v) {
  alignas(32) double buf[kLanes];
  _mm256_store_pd(buf, v);
  return (buf[0] + buf[1]) + (buf[2] + buf[3]);
}

}  // namespace

PlaneSums focal_plane(const FocalParams& params, const PlaneArgs& args) {
  const size_t n = args.logits.size();
  const bool per_cell = !args.cell_weights.empty();
  const bool want_grad = !args.grad.empty();

  const __m256d gamma = _mm256_set1_pd(params.gamma);
  const __m256d beta = _mm256_set1_pd(params.penalty_beta);
  const __m256d lo = _mm256_set1_pd(params.epsilon);
  const __m256d hi = _mm256_set1_pd(1.0 - params.epsilon);
  const __m256d scale = _mm256_set1_pd(args.grad_scale);
  const __m256d uniform = _mm256_set1_pd(args.uniform_weight);

  __m256d fg = _mm256_setzero_pd();
  __m256d bg = _mm256_setzero_pd();
  size_t c = 0;
  for (; c + kLanes <= n; c += kLanes) {
    const __m256d z = _mm256_loadu_pd(args.logits.data() + c);
    const __m256d y = _mm256_loadu_pd(args.targets.data() + c);
    const __m256d w = per_cell ? _mm256_loadu_pd(args.cell_weights.data() + c) : uniform;
    const Lane r = cell_block(z, y, w, gamma, beta, lo, hi, scale);
    fg = _mm256_add_pd(fg, r.fg);
    bg = _mm256_add_pd(bg, r.bg);
    if (want_grad) _mm256_storeu_pd(args.grad.data() + c, r.grad);
  }
  if (c < n) {
    // Tail: pad with zero-weight background cells so every cell takes the same path.
    alignas(32) double zb[kLanes] = {0, 0, 0, 0};
    alignas(32) double yb[kLanes] = {0, 0, 0, 0};
    alignas(32) double wb[kLanes] = {0, 0, 0, 0};
    alignas(32) double gb[kLanes];
    const size_t rest = n - c;
    for (size_t i = 0; i < rest; ++i) {
      zb[i] = args.logits[c + i];
      yb[i] = args.targets[c + i];
      wb[i] = per_cell ? args.cell_weights[c + i] : args.uniform_weight;
    }
    const Lane r = cell_block(_mm256_load_pd(zb), _mm256_load_pd(yb), _mm256_load_pd(wb), gamma,
                              beta, lo, hi, scale);
    fg = _mm256_add_pd(fg, r.fg);
    bg = _mm256_add_pd(bg, r.bg);
    if (want_grad) {
      _mm256_store_pd(gb, r.grad);
      std::copy_n(gb, rest, args.grad.data() + c);
    }
  }
  return {hsum(fg), hsum(bg)};
}

void sigmoid_plane(std::span<const double> logits, std::span<double> out) {
  const size_t n = logits.size();
  size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(out.data() + i, sigmoid_pd(_mm256_loadu_pd(logits.data() + i)));
  }
  if (i < n) {
    alignas(32) double buf[kLanes] = {0, 0, 0, 0};
    std::copy_n(logits.data() + i, n - i, buf);
    _mm256_store_pd(buf, sigmoid_pd(_mm256_load_pd(buf)));
    std::copy_n(buf, n - i, out.data() + i);
  }
}

}  // namespace bofl::kernels::avx2
