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


#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "bofl/error.hpp"
#include "bofl/kernels.hpp"
#include "bofl/losses.hpp"
#include "oracles.hpp"

using namespace bofl;

namespace {

constexpr std::array kAllKinds = {LossKind::SigmoidCE,          LossKind::Focal,
                                  LossKind::PenaltyReducedFocal, LossKind::ClassBalancedFocal,
                                  LossKind::ClassWiseFocal,      LossKind::BOFL};

LossConfig config_for(LossKind kind) {
  LossConfig c;
  c.kind = kind;
  return c;
}

// Single-cell batch with one logit and one target.
HeatmapBatch one_cell(double p, double y) {
  return HeatmapBatch::from_probabilities({1, 1, 1, 1}, std::vector<double>{p}, {y});
}

}  // namespace

TEST_CASE("kind names round-trip") {
  for (auto k : kAllKinds) CHECK(parse_loss_kind(to_string(k)) == k);
  CHECK_FALSE(parse_loss_kind("softmax").has_value());
}

TEST_CASE("pt transform and focal term") {
  CHECK(pt_transform(0.7, true) == 0.7);
  CHECK(pt_transform(0.7, false) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(pt_transform(0.5, true) == pt_transform(0.5, false));
  CHECK(focal_term(0.5, 2.0) == doctest::Approx(0.25 * std::numbers::ln2).epsilon(1e-15));
  CHECK(focal_term(0.5, 2.0) == doctest::Approx(0.173287).epsilon(1e-6));
  CHECK(focal_term(0.5, 0.0) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(focal_term(1.0 - 1e-12, 2.0) < 1e-30);
}

TEST_CASE("single-cell values") {
  LossConfig cfg;
  SUBCASE("peak cell at p = 0.5 with gamma 2") {
    CHECK(penalty_reduced_focal(one_cell(0.5, 1.0), cfg).total ==
          doctest::Approx(0.25 * std::numbers::ln2).epsilon(1e-14));
  }
  SUBCASE("confident background vanishes") {
    CHECK(penalty_reduced_focal(one_cell(1e-9, 0.0), cfg).total < 1e-25);
  }
  SUBCASE("penalty reduction near a peak") {
    const double y0 = penalty_reduced_focal(one_cell(0.3, 0.0), cfg).total;
    const double y5 = penalty_reduced_focal(one_cell(0.3, 0.5), cfg).total;
    CHECK(y5 < y0);
    CHECK(y5 == doctest::Approx(y0 * std::pow(0.5, 4)).epsilon(1e-14));
  }
  SUBCASE("sigmoid CE at p = 0.5 on a peak") {
    CHECK(sigmoid_ce(one_cell(0.5, 1.0), cfg).total == doctest::Approx(std::numbers::ln2).epsilon(1e-14));
  }
}

TEST_CASE("sigmoid CE near-perfect bound") {
  const BatchShape s{1, 3, 4, 4};
  std::vector<double> y(s.size(), 0.0), p(s.size());
  y[5] = y[21] = 1.0;
  LossConfig cfg;
  for (size_t i = 0; i < y.size(); ++i) p[i] = y[i] == 1.0 ? 1.0 - 1e-15 : 1e-15;
  const auto r = sigmoid_ce(HeatmapBatch::from_probabilities(s, p, y), cfg);
  CHECK(r.total <= s.size() * -std::log(1.0 - cfg.prob_clamp_epsilon));
}

TEST_CASE("every kind matches the brute-force cell loop") {
  for (auto kind : kAllKinds) {
    CAPTURE(to_string(kind));
    for (uint64_t seed = 1; seed <= 10; ++seed) {
      const BatchShape s{2, 3, 4, 4};
      const auto b = random_batch(s, seed);
      const auto w = seeded_weights(kind, s, seed);
      const auto cfg = config_for(kind);
      const auto got = compute_loss(b, w, cfg);
      const auto want = oracle::brute_force(b, w, cfg);
      CHECK(oracle::rel(got.total, want.total) < 1e-12);
      CHECK(oracle::max_grad_error(got.gradient, want.gradient) < 1e-10);
    }
  }
}

TEST_CASE("reduction chain with unit weights") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const BatchShape s{2, 4, 8, 8};
    const auto b = random_batch(s, seed);
    LossConfig cfg;
    const auto base = penalty_reduced_focal(b, cfg);
    const std::vector<double> ones(s.classes, 1.0);
    const auto cw = class_wise_focal(b, ones, cfg);
    const auto bb = bofl::bofl(b, batch_balanced_weights(ones, 1.0, b), cfg);
    const auto cb = class_balanced_focal(b, ones, cfg);
    CHECK(oracle::rel(cw.total, base.total) < 1e-12);
    CHECK(oracle::rel(bb.total, base.total) < 1e-12);
    CHECK(oracle::rel(cb.total, base.total) < 1e-12);
    CHECK(cw.gradient == base.gradient);
    CHECK(bb.gradient == base.gradient);
  }
}

TEST_CASE("class-wise weights act per channel") {
  const BatchShape s{2, 3, 6, 6};
  const auto b = random_batch(s, 3);
  LossConfig cfg;
  const auto unit = class_wise_focal(b, std::vector<double>{1, 1, 1}, cfg);
  const auto doubled = class_wise_focal(b, std::vector<double>{2, 1, 1}, cfg);
  CHECK(doubled.channel(0) == doctest::Approx(2.0 * unit.channel(0)).epsilon(1e-15));
  CHECK(doubled.channel(1) == unit.channel(1));
  CHECK(doubled.channel(2) == unit.channel(2));
}

TEST_CASE("class-balanced weight scales a lone positive") {
  const BatchShape s{1, 2, 1, 1};
  const std::vector<double> p = {0.3, 0.4};
  const std::vector<double> y = {1.0, 0.0};
  LossConfig cfg;
  const auto b = HeatmapBatch::from_probabilities(s, p, y);
  const double plain = focal(b, cfg).total;
  CHECK(class_balanced_focal(b, std::vector<double>{2.0, 1.0}, cfg).total ==
        doctest::Approx(2.0 * plain).epsilon(1e-15));
}

TEST_CASE("batch-balanced weights") {
  const std::vector<std::vector<int64_t>> counts = {{2, 0}, {1, 3}};
  SUBCASE("closed form") {
    const auto w = batch_balanced_weights(std::vector<double>{1.5, 1.0}, 0.8, counts);
    CHECK(w.at(0, 0) == doctest::Approx(0.96).epsilon(1e-15));
    CHECK(w.at(0, 1) == 1.5);
    CHECK(w.at(1, 1) == doctest::Approx(0.512).epsilon(1e-15));
  }
  SUBCASE("eta one leaves the class weights") {
    const auto w = batch_balanced_weights(std::vector<double>{1.5, 0.7}, 1.0, counts);
    CHECK(w.at(0, 0) == 1.5);
    CHECK(w.at(1, 1) == 0.7);
  }
  SUBCASE("counts from a batch") {
    const auto b = random_batch({3, 2, 8, 8}, 9);
    const auto w = batch_balanced_weights(std::vector<double>{1.0, 2.0}, 0.5, b);
    for (size_t i = 0; i < 2; ++i)
      for (size_t k = 0; k < 3; ++k)
        CHECK(w.at(i, k) == doctest::Approx((i ? 2.0 : 1.0) * std::pow(0.5, b.peak_count(i, k))));
  }
}

TEST_CASE("losses are nonnegative and grow with the error") {
  LossConfig cfg;
  for (auto kind : kAllKinds) {
    cfg.kind = kind;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      const BatchShape s{2, 3, 5, 5};
      const auto r = compute_loss(random_batch(s, seed), seeded_weights(kind, s, seed), cfg);
      CHECK(r.total >= 0.0);
    }
  }
  double prev = -1.0;
  for (double p : {0.9, 0.7, 0.5, 0.3, 0.1}) {
    const double v = penalty_reduced_focal(one_cell(p, 1.0), LossConfig{}).total;
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("zero weights give a zero gradient") {
  const BatchShape s{2, 3, 8, 8};
  const auto b = random_batch(s, 4);
  const auto r = bofl::bofl(b, ClassImageWeights(3, 2, 0.0), LossConfig{});
  CHECK(r.total == 0.0);
  for (double g : r.gradient) CHECK(g == 0.0);
}

TEST_CASE("normalizer floors at one") {
  const BatchShape s{1, 1, 2, 2};
  const auto b = HeatmapBatch::from_probabilities(s, std::vector<double>(4, 0.2), std::vector<double>(4, 0.0));
  CHECK(b.total_peaks() == 0);
  CHECK(b.normalizer() == 1.0);
  CHECK(penalty_reduced_focal(b, LossConfig{}).total ==
        doctest::Approx(4 * 0.04 * -std::log(0.8)).epsilon(1e-14));
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(HeatmapBatch({1, 1, 2, 2}, std::vector<double>(3), std::vector<double>(4)), ShapeError);
  LossConfig bad;
  bad.gamma = -1.0;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  const auto b = random_batch({1, 3, 2, 2}, 1);
  CHECK_THROWS(class_wise_focal(b, std::vector<double>{1.0}, LossConfig{}));
}

TEST_CASE("report json") {
  const auto r = penalty_reduced_focal(random_batch({1, 2, 3, 3}, 1), LossConfig{});
  const auto j = r.to_json(true);
  CHECK(j.at("total").get<double>() == r.total);
  CHECK(j.at("gradient").size() == r.gradient.size());
}

TEST_CASE("gradient checks") {
  SUBCASE("every kind passes on a few seeds") {
    for (auto kind : kAllKinds) {
      CAPTURE(to_string(kind));
      const auto res = gradcheck_suite(kind, 100, 5);
      CHECK(res.passed);
      CHECK(res.max_relative_error <= gradcheck_tolerance(kind));
    }
  }
  SUBCASE("tampered gradient fails") {
    const auto res = gradcheck_suite(LossKind::BOFL, 1, 2, std::nullopt,
                                     [](std::vector<double>& g) { g[3] *= 1.01; });
    CHECK_FALSE(res.passed);
  }
  SUBCASE("black-box check on a smooth small batch") {
    const BatchShape s{1, 2, 3, 3};
    const auto b = random_batch(s, 8, 2.0);
    const auto r = loss_gradient_check(seeded_loss(LossKind::SigmoidCE, s, 8), b, 1e-5);
    CHECK(r.max_relative_error < 1e-6);
  }
  SUBCASE("perturbation range") {
    const auto b = random_batch({1, 1, 2, 2}, 1);
    CHECK_THROWS_AS(loss_gradient_check(seeded_loss(LossKind::Focal, b.shape(), 1), b, 1e-1), ArgumentError);
  }
  SUBCASE("reference total is independent of the kernel") {
    const BatchShape s{2, 3, 8, 8};
    const auto b = random_batch(s, 12);
    for (auto kind : kAllKinds) {
      const auto w = seeded_weights(kind, s, 12);
      const auto mine = oracle::brute_force(b, w, config_for(kind));
      CHECK(oracle::rel(reference_total(b, w, config_for(kind)), mine.total) < 1e-15);
    }
  }
}
