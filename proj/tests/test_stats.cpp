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

#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bofl/error.hpp"
#include "bofl/stats.hpp"
#include "bofl/synth.hpp"

using namespace bofl;

namespace {

std::string two_class_doc() {
  return R"({
    "images": [{"id": 1}, {"id": 2}, {"id": 3}],
    "categories": [{"id": 1, "name": "catA"}, {"id": 2, "name": "catB"}],
    "annotations": [
      {"id": 1, "image_id": 1, "category_id": 1},
      {"id": 2, "image_id": 1, "category_id": 1},
      {"id": 3, "image_id": 2, "category_id": 1},
      {"id": 4, "image_id": 3, "category_id": 2}
    ]})";
}

ClassStats from_counts(const std::vector<int64_t>& counts) {
  ClassStats s;
  for (size_t i = 0; i < counts.size(); ++i) {
    s.class_ids.push_back(static_cast<int64_t>(i) + 1);
    s.names.push_back("c" + std::to_string(i));
    s.instance_counts.push_back(counts[i]);
    s.image_counts.push_back(std::min<int64_t>(counts[i], 1000));
    s.total_instances += counts[i];
  }
  s.total_images = 1000;
  return s;
}

}  // namespace

TEST_CASE("ingest counts instances and distinct images") {
  const auto s = ingest_annotations(two_class_doc());
  REQUIRE(s.num_classes() == 2);
  CHECK(s.instance_counts == std::vector<int64_t>{3, 1});
  CHECK(s.image_counts == std::vector<int64_t>{2, 1});
  CHECK(s.total_instances == 4);
  CHECK(s.total_images == 3);
  CHECK(s.names[0] == "catA");
}

TEST_CASE("ingest of a category without annotations") {
  const auto s = ingest_annotations(
      R"({"images": [], "annotations": [], "categories": [{"id": 7, "name": "x"}]})");
  CHECK(s.instance_counts == std::vector<int64_t>{0});
  CHECK(s.total_instances == 0);
}

TEST_CASE("ingest reproduces the generator's bookkeeping") {
  SynthSpec spec;
  spec.num_classes = 5;
  spec.images = 300;
  spec.class_distribution = PowerLawClasses{1.5};
  spec.seed = 42;
  const auto ds = generate_dataset(spec);
  const auto s = ingest_annotations(to_annotation_json(ds).dump());
  CHECK(s.instance_counts == ds.class_counts());
}

TEST_CASE("ingest rejects malformed documents") {
  CHECK_THROWS_AS(ingest_annotations("{\"images\": [}"), ParseError);
  CHECK_THROWS_AS(ingest_annotations(R"({"images": [], "annotations": []})"), ParseError);
  CHECK_THROWS_AS(ingest_annotations(R"({"images": [{"id": 1}], "categories": [{"id": 1, "name": "a"}],
      "annotations": [{"id": 1, "image_id": 1, "category_id": 9}]})"),
                  SchemaError);
  CHECK_THROWS_AS(ingest_annotations(R"({"images": [{"id": 1}], "categories": [{"id": 1, "name": "a"}],
      "annotations": [{"id": 1, "image_id": 5, "category_id": 1}]})"),
                  SchemaError);
  CHECK_THROWS_AS(ingest_annotations_file("/nonexistent/file.json"), ArgumentError);
}

TEST_CASE("parse errors carry line context") {
  try {
    ingest_annotations("{\n  \"images\": [\n  oops\n]}");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("effective-number weights: closed-form cases") {
  SUBCASE("beta = 0 gives ones") {
    const auto w = effective_number_alpha(from_counts({5, 100, 1}), 0.0);
    for (double a : w.alphas) CHECK(a == 1.0);
  }
  SUBCASE("a single instance gives one for any beta") {
    for (double beta : {0.1, 0.5, 0.9, 0.999}) {
      CHECK(effective_number_alpha(from_counts({1}), beta).alphas[0] == doctest::Approx(1.0).epsilon(1e-15));
    }
  }
  SUBCASE("beta 0.999, n = 100 against the geometric series") {
    const double beta = 0.999;
    long double series = 0.0L;
    for (int j = 1; j <= 100; ++j) series += std::pow(static_cast<long double>(beta), j - 1);
    const double expected = static_cast<double>(1.0L / series);
    const double got = effective_number_alpha(from_counts({100}), beta).alphas[0];
    CHECK(std::fabs(got - expected) / expected < 1e-12);
  }
  SUBCASE("zero count is refused") {
    CHECK_THROWS_AS(effective_number_alpha(from_counts({3, 0}), 0.9), ZeroCountError);
  }
}

TEST_CASE("effective-number weights decrease with count") {
  const auto w = effective_number_alpha(from_counts({1, 2, 10, 100, 1000}), 0.99);
  for (size_t i = 1; i < w.size(); ++i) CHECK(w.alphas[i] < w.alphas[i - 1]);
}

TEST_CASE("inverse-frequency weights") {
  SUBCASE("balanced") {
    for (double a : inverse_frequency_alpha(from_counts({25, 25, 25, 25})).alphas) CHECK(a == 1.0);
  }
  SUBCASE("70/10/10/10") {
    const auto w = inverse_frequency_alpha(from_counts({70, 10, 10, 10}));
    CHECK(w.alphas[0] == doctest::Approx(100.0 / 280.0).epsilon(1e-15));
    for (int i = 1; i < 4; ++i) CHECK(w.alphas[i] == doctest::Approx(2.5).epsilon(1e-15));
  }
  SUBCASE("weighted count identity on random counts") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int64_t> d(1, 5000);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int64_t> counts(10);
      for (auto& c : counts) c = d(rng);
      const auto s = from_counts(counts);
      const auto w = inverse_frequency_alpha(s);
      long double sum = 0.0L;
      for (size_t i = 0; i < counts.size(); ++i) sum += counts[i] * static_cast<long double>(w.alphas[i]);
      CHECK(std::fabs(static_cast<double>(sum) - s.total_instances) / s.total_instances < 1e-9);
    }
  }
  SUBCASE("zero-count classes are capped and listed") {
    const auto w = inverse_frequency_alpha(from_counts({9, 0}));
    CHECK(w.capped_classes == std::vector<size_t>{1});
    CHECK(w.alphas[1] == doctest::Approx(9.0 / 2.0));
  }
  SUBCASE("empty dataset is refused") {
    CHECK_THROWS_AS(inverse_frequency_alpha(from_counts({0, 0})), EmptyDatasetError);
  }
}

TEST_CASE("intensity scaling") {
  WeightingFactors w;
  w.alphas = {2.0, 0.5};
  w.intensity = 0.05;
  const auto s = w.intensity_scaled();
  CHECK(s[0] == doctest::Approx(1.05).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(0.975).epsilon(1e-15));
  CHECK(WeightingFactors::uniform(3).alphas == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("normalized effective number approaches inverse frequency") {
  SUBCASE("counts [3, 1] near beta = 1") {
    const auto r = limit_consistency_check(from_counts({3, 1}), {0.9, 0.99, 0.999, 1.0 - 1e-8});
    CHECK(r.converging);
    CHECK(r.rows.back().max_deviation < 1e-6);
  }
  SUBCASE("equal counts give ratio one at every beta") {
    const auto r = limit_consistency_check(from_counts({7, 7, 7}), {0.1, 0.5, 0.9});
    for (const auto& row : r.rows) CHECK(row.max_deviation < 1e-15);
  }
  SUBCASE("counts [100, 1] at beta 0.5 are far from the limit") {
    const auto r = limit_consistency_check(from_counts({100, 1}), {0.5});
    CHECK(r.rows[0].max_deviation > 0.5);
    CHECK_FALSE(r.converging);
  }
  SUBCASE("deviation shrinks like (1 - beta) for moderate counts") {
    // Leading-order deviation of each ratio is (1 - beta) (n_y - n / C) / 2.
    const auto s = from_counts({300, 100, 20});
    const double delta = 1e-7;
    const auto r = limit_consistency_check(s, {1.0 - delta});
    const double mean = 140.0;
    for (size_t i = 0; i < 3; ++i) {
      const double predicted = 1.0 + delta * (s.instance_counts[i] - mean) / 2.0;
      CHECK(r.rows[0].ratios[i] == doctest::Approx(predicted).epsilon(1e-8));
    }
  }
}

TEST_CASE("head/tail split by image frequency") {
  ClassStats s = from_counts({10, 10, 10});
  s.total_images = 100;
  s.image_counts = {50, 10, 5};
  SUBCASE("threshold exactly on a class goes to head") {
    const auto split = split_head_tail(s, 0.10);
    CHECK(split.head == std::set<int64_t>{1, 2});
    CHECK(split.tail == std::set<int64_t>{3});
  }
  SUBCASE("threshold above every frequency makes all tail") {
    const auto split = split_head_tail(s, 0.51);
    CHECK(split.head.empty());
    CHECK(split.tail.size() == 3);
  }
  SUBCASE("uniform frequencies below threshold") {
    s.image_counts = {20, 20, 20};
    CHECK(split_head_tail(s, 0.0867).tail.empty());
  }
}

TEST_CASE("stats CSV layout") {
  std::ostringstream out;
  write_stats_csv(out, ingest_annotations(two_class_doc()), 0.0);
  const std::string csv = out.str();
  CHECK(csv.rfind("class_id,name,instances,images,alpha_effnum,alpha_invfreq\n", 0) == 0);
  CHECK(csv.find('\r') == std::string::npos);
  CHECK(csv.find("1,catA,3,2,1,") != std::string::npos);
  CHECK(csv.find("2,catB,1,1,1,2\n") != std::string::npos);
}
