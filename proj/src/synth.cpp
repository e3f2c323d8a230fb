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

#include "bofl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "bofl/error.hpp"
#include "bofl/tensor_io.hpp"

namespace bofl {

void SynthSpec::validate() const {
  if (num_classes < 2) throw ArgumentError("synthetic datasets need at least 2 classes");
  if (height < 4 || width < 4) throw ArgumentError("grid must be at least 4x4");
  if (images < 1) throw ArgumentError("synthetic datasets need at least 1 image");
  if (!(gaussian_sigma > 0.0)) throw ArgumentError("gaussian_sigma must be > 0");
  if (feature_dim < 1) throw ArgumentError("feature_dim must be >= 1");
  if (!(feature_noise >= 0.0) || !(feature_separation >= 0.0)) {
    throw ArgumentError("feature_noise and feature_separation must be >= 0");
  }
  const int cells = height * width;
  if (const auto* ex = std::get_if<ExplicitClasses>(&class_distribution)) {
    if (static_cast<int>(ex->counts.size()) != num_classes) {
      throw ArgumentError(fmt::format("explicit counts list has {} entries for {} classes",
                                      ex->counts.size(), num_classes));
    }
    int64_t total = 0;
    for (int64_t c : ex->counts) {
      if (c < 0) throw ArgumentError("explicit counts must be >= 0");
      total += c;
    }
    if ((total + images - 1) / images > cells) {
      throw ArgumentError("explicit counts do not fit on the grids");
    }
  } else {
    if (min_objects < 0 || max_objects < min_objects) {
      throw ArgumentError("objects_per_image must be a range [min, max] with 0 <= min <= max");
    }
    if (max_objects > cells) throw ArgumentError("max_objects exceeds the number of grid cells");
  }
  if (const auto* pl = std::get_if<PowerLawClasses>(&class_distribution)) {
    if (!(pl->exponent >= 0.0)) throw ArgumentError("power-law exponent must be >= 0");
  }
}

std::vector<int64_t> SynthDataset::class_counts() const {
  std::vector<int64_t> counts(spec.num_classes, 0);
  for (const auto& img : images) {
    for (const auto& obj : img.objects) ++counts[obj.cls];
  }
  return counts;
}

std::vector<std::vector<int64_t>> SynthDataset::per_image_class_counts() const {
  std::vector<std::vector<int64_t>> counts(spec.num_classes, std::vector<int64_t>(images.size(), 0));
  for (size_t k = 0; k < images.size(); ++k) {
    for (const auto& obj : images[k].objects) ++counts[obj.cls][k];
  }
  return counts;
}

size_t SynthDataset::total_objects() const {
  size_t n = 0;
  for (const auto& img : images) n += img.objects.size();
  return n;
}

SynthDataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::mt19937_64 mean_rng(spec.feature_seed.value_or(spec.seed) ^ 0xC1A55E5ULL);
  std::normal_distribution<double> mean_normal(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SynthDataset ds;
  ds.spec = spec;
  for (int c = 0; c < spec.num_classes; ++c) {
    std::vector<double> mean(spec.feature_dim);
    double norm2 = 0.0;
    for (auto& v : mean) {
      v = mean_normal(mean_rng);
      norm2 += v * v;
    }
    const double scale = norm2 > 0.0 ? spec.feature_separation / std::sqrt(norm2) : 0.0;
    for (auto& v : mean) v *= scale;
    ds.class_means.push_back(std::move(mean));
  }

  // Class labels per image.
  std::vector<std::vector<int>> labels(spec.images);
  if (const auto* ex = std::get_if<ExplicitClasses>(&spec.class_distribution)) {
    std::vector<int> all;
    for (int c = 0; c < spec.num_classes; ++c) all.insert(all.end(), ex->counts[c], c);
    std::shuffle(all.begin(), all.end(), rng);
    for (size_t j = 0; j < all.size(); ++j) labels[j % spec.images].push_back(all[j]);
  } else {
    std::vector<double> weights(spec.num_classes, 1.0);
    if (const auto* pl = std::get_if<PowerLawClasses>(&spec.class_distribution)) {
      for (int c = 0; c < spec.num_classes; ++c) weights[c] = std::pow(c + 1.0, -pl->exponent);
    }
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    std::uniform_int_distribution<int> how_many(spec.min_objects, spec.max_objects);
    for (auto& img : labels) {
      const int n = how_many(rng);
      for (int j = 0; j < n; ++j) img.push_back(pick(rng));
    }
  }

  std::uniform_int_distribution<int> col(0, spec.width - 1);
  std::uniform_int_distribution<int> row(0, spec.height - 1);
  for (int k = 0; k < spec.images; ++k) {
    SynthImage img;
    img.id = k + 1;
    std::vector<bool> occupied(static_cast<size_t>(spec.height * spec.width), false);
    for (int cls : labels[k]) {
      GridObject obj;
      obj.cls = cls;
      // One object per cell at most; collisions are resampled.
      do {
        obj.cx = col(rng);
        obj.cy = row(rng);
      } while (occupied[obj.cy * spec.width + obj.cx]);
      occupied[obj.cy * spec.width + obj.cx] = true;
      obj.feature.resize(spec.feature_dim);
      for (int d = 0; d < spec.feature_dim; ++d) {
        obj.feature[d] = ds.class_means[cls][d] + spec.feature_noise * normal(rng);
      }
      img.objects.push_back(std::move(obj));
    }
    ds.images.push_back(std::move(img));
  }
  return ds;
}

nlohmann::json to_annotation_json(const SynthDataset& dataset) {
  nlohmann::json doc;
  doc["images"] = nlohmann::json::array();
  doc["annotations"] = nlohmann::json::array();
  doc["categories"] = nlohmann::json::array();
  int64_t ann_id = 1;
  for (const auto& img : dataset.images) {
    doc["images"].push_back(
        {{"id", img.id}, {"width", dataset.spec.width}, {"height", dataset.spec.height}});
    for (const auto& obj : img.objects) {
      doc["annotations"].push_back({{"id", ann_id++},
                                    {"image_id", img.id},
                                    {"category_id", obj.cls + 1},
                                    {"center", {obj.cx, obj.cy}}});
    }
  }
  for (int c = 0; c < dataset.spec.num_classes; ++c) {
    doc["categories"].push_back({{"id", c + 1}, {"name", fmt::format("class_{}", c + 1)}});
  }
  return doc;
}

std::vector<double> render_heatmap(const std::vector<GridObject>& objects, int classes, int height,
                                   int width, double sigma) {
  if (classes < 1 || height < 1 || width < 1) throw ArgumentError("heatmap dimensions must be >= 1");
  if (!(sigma > 0.0)) throw ArgumentError("sigma must be > 0");
  const size_t plane = static_cast<size_t>(height) * width;
  std::vector<double> y(static_cast<size_t>(classes) * plane, 0.0);
  const double denom = 2.0 * sigma * sigma;
  for (const auto& obj : objects) {
    if (obj.cls < 0 || obj.cls >= classes) {
      throw ArgumentError(fmt::format("object class {} outside [0, {})", obj.cls, classes));
    }
    if (obj.cx < 0 || obj.cx >= width || obj.cy < 0 || obj.cy >= height) {
      throw ArgumentError(
          fmt::format("object center ({}, {}) outside the {}x{} grid", obj.cx, obj.cy, width, height));
    }
    double* ch = y.data() + obj.cls * plane;
    for (int r = 0; r < height; ++r) {
      const double dy = r - obj.cy;
      for (int c = 0; c < width; ++c) {
        const double dx = c - obj.cx;
        const double v = std::exp(-(dx * dx + dy * dy) / denom);
        double& cell = ch[r * width + c];
        cell = std::max(cell, v);
      }
    }
  }
  return y;
}

void write_dataset_tensors(const SynthDataset& dataset, const std::filesystem::path& features_path,
                           const std::filesystem::path& heatmaps_path) {
  const auto& s = dataset.spec;
  const size_t plane = static_cast<size_t>(s.height) * s.width;
  std::vector<float> features(dataset.images.size() * plane * s.feature_dim, 0.0f);
  std::vector<float> heatmaps;
  heatmaps.reserve(dataset.images.size() * s.num_classes * plane);
  for (size_t k = 0; k < dataset.images.size(); ++k) {
    const auto& img = dataset.images[k];
    for (const auto& obj : img.objects) {
      float* f = features.data() + (k * plane + obj.cy * s.width + obj.cx) * s.feature_dim;
      for (int d = 0; d < s.feature_dim; ++d) f[d] = static_cast<float>(obj.feature[d]);
    }
    const auto y = render_heatmap(img.objects, s.num_classes, s.height, s.width, s.gaussian_sigma);
    for (double v : y) heatmaps.push_back(static_cast<float>(v));
  }
  const std::vector<uint64_t> fdims = {dataset.images.size(), static_cast<uint64_t>(s.height),
                                       static_cast<uint64_t>(s.width),
                                       static_cast<uint64_t>(s.feature_dim)};
  const std::vector<uint64_t> hdims = {dataset.images.size(), static_cast<uint64_t>(s.num_classes),
                                       static_cast<uint64_t>(s.height),
                                       static_cast<uint64_t>(s.width)};
  write_tensor_file(features_path, fdims, features);
  write_tensor_file(heatmaps_path, hdims, heatmaps);
}

}  // namespace bofl
