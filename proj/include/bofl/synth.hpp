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

// Deterministic long-tailed toy detection datasets.
//
// Each image is an H x W grid. Every object occupies one cell (its center)
// and carries a feature vector drawn from a class-conditional Gaussian
// cluster; every other cell carries the fixed background feature (zero).
// Ground truth is the usual center heatmap: per class channel, the max over
// that class's objects of exp(-d^2 / (2 sigma^2)).

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace bofl {

struct UniformClasses {};
struct PowerLawClasses {
  double exponent = 1.5;  // P(class rank r) proportional to r^-exponent, r = 1..C
};
struct ExplicitClasses {
  std::vector<int64_t> counts;  // exact instance count per class
};
using ClassDistribution = std::variant<UniformClasses, PowerLawClasses, ExplicitClasses>;

struct SynthSpec {
  int num_classes = 4;
  int height = 16;
  int width = 16;
  int images = 100;
  ClassDistribution class_distribution = UniformClasses{};
  int min_objects = 1;  // per image; not used by ExplicitClasses
  int max_objects = 4;
  double gaussian_sigma = 1.5;
  int feature_dim = 16;
  double feature_separation = 3.0;  // norm of each class mean
  double feature_noise = 1.0;       // per-dimension std of object features
  uint64_t seed = 1;
  // Seed of the class means. Unset means `seed`; a held-out set shares the
  // training set's value so both draw from the same class clusters.
  std::optional<uint64_t> feature_seed;

  // Throws ArgumentError.
  void validate() const;
};

struct GridObject {
  int cls = 0;  // class index in [0, C)
  int cx = 0;   // column
  int cy = 0;   // row
  std::vector<double> feature;
};

struct SynthImage {
  int64_t id = 0;
  std::vector<GridObject> objects;
};

struct SynthDataset {
  SynthSpec spec;
  std::vector<std::vector<double>> class_means;  // (C, F)
  std::vector<SynthImage> images;

  // Instance count per class from the generator's own bookkeeping.
  std::vector<int64_t> class_counts() const;
  // counts[i][k]: objects of class i in image k.
  std::vector<std::vector<int64_t>> per_image_class_counts() const;
  size_t total_objects() const;
};

SynthDataset generate_dataset(const SynthSpec& spec);

// Class ids in the document are 1..C (category_id = class index + 1); image
// ids are 1..images. Annotations carry an extra "center": [cx, cy] field.
nlohmann::json to_annotation_json(const SynthDataset& dataset);

// (C, H, W) target heatmap. Throws ArgumentError for out-of-grid centers or
// class indices outside [0, classes).
std::vector<double> render_heatmap(const std::vector<GridObject>& objects, int classes, int height,
                                   int width, double sigma);

// Dense (images, H, W, F) float32 features and (images, C, H, W) heatmaps.
void write_dataset_tensors(const SynthDataset& dataset, const std::filesystem::path& features_path,
                           const std::filesystem::path& heatmaps_path);

}  // namespace bofl
