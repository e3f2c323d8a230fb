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

#include "bofl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "bofl/error.hpp"

namespace bofl {

namespace {

using nlohmann::json;

std::string line_context(std::string_view text, size_t byte) {
  size_t line = 1, col = 1;
  for (size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return fmt::format("line {}, column {}", line, col);
}

int64_t require_int(const json& record, const char* field, const std::string& where) {
  auto it = record.find(field);
  if (it == record.end()) {
    throw ParseError(fmt::format("{}: missing field '{}'", where, field));
  }
  if (!it->is_number_integer()) {
    throw ParseError(fmt::format("{}: field '{}' must be an integer", where, field));
  }
  return it->get<int64_t>();
}

const json& require_array(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw ParseError(fmt::format("missing top-level array '{}'", key));
  if (!it->is_array()) throw ParseError(fmt::format("top-level '{}' must be an array", key));
  return *it;
}

// 1 - beta^n evaluated as -expm1(n * log1p(beta - 1)) in extended precision.
long double one_minus_pow(double beta, int64_t n) {
  const long double b = beta;
  if (b == 0.0L) return 1.0L;
  return -std::expm1l(static_cast<long double>(n) * std::log1pl(b - 1.0L));
}

double effnum_alpha_single(double beta, int64_t n) {
  if (n == 1) return 1.0;
  const long double num = 1.0L - static_cast<long double>(beta);
  return static_cast<double>(num / one_minus_pow(beta, n));
}

}  // namespace

void ClassStats::validate() const {
  const size_t c = class_ids.size();
  if (c == 0) throw SchemaError("class statistics need at least one class");
  if (names.size() != c || instance_counts.size() != c || image_counts.size() != c) {
    throw SchemaError("class statistics arrays have inconsistent lengths");
  }
  if (!std::is_sorted(class_ids.begin(), class_ids.end()) ||
      std::adjacent_find(class_ids.begin(), class_ids.end()) != class_ids.end()) {
    throw SchemaError("class ids must be strictly ascending");
  }
  int64_t sum = 0;
  for (size_t i = 0; i < c; ++i) {
    if (instance_counts[i] < 0 || image_counts[i] < 0) {
      throw SchemaError(fmt::format("class {} has a negative count", class_ids[i]));
    }
    if (image_counts[i] > total_images) {
      throw SchemaError(fmt::format("class {} appears in more images than exist", class_ids[i]));
    }
    sum += instance_counts[i];
  }
  if (sum != total_instances) throw SchemaError("total_instances does not match the per-class sum");
  if (total_images < 0) throw SchemaError("total_images is negative");
}

std::vector<double> WeightingFactors::intensity_scaled() const {
  std::vector<double> out(alphas.size());
  for (size_t i = 0; i < alphas.size(); ++i) out[i] = 1.0 + intensity * (alphas[i] - 1.0);
  return out;
}

WeightingFactors WeightingFactors::uniform(size_t num_classes) {
  WeightingFactors w;
  w.alphas.assign(num_classes, 1.0);
  return w;
}

ClassStats ingest_annotations(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("annotation document is not valid JSON ({}): {}",
                                 line_context(json_text, e.byte), e.what()));
  }
  if (!doc.is_object()) throw ParseError("annotation document must be a JSON object");

  const json& images = require_array(doc, "images");
  const json& annotations = require_array(doc, "annotations");
  const json& categories = require_array(doc, "categories");

  std::map<int64_t, std::string> category_names;
  for (size_t i = 0; i < categories.size(); ++i) {
    const auto where = fmt::format("categories[{}]", i);
    const json& rec = categories[i];
    if (!rec.is_object()) throw ParseError(where + ": must be an object");
    const int64_t id = require_int(rec, "id", where);
    auto name_it = rec.find("name");
    if (name_it == rec.end() || !name_it->is_string()) {
      throw ParseError(where + ": field 'name' must be a string");
    }
    if (!category_names.emplace(id, name_it->get<std::string>()).second) {
      throw SchemaError(fmt::format("{}: duplicate category id {}", where, id));
    }
  }
  if (category_names.empty()) throw SchemaError("annotation document defines no categories");

  std::unordered_set<int64_t> image_ids;
  for (size_t i = 0; i < images.size(); ++i) {
    const auto where = fmt::format("images[{}]", i);
    if (!images[i].is_object()) throw ParseError(where + ": must be an object");
    if (!image_ids.insert(require_int(images[i], "id", where)).second) {
      throw SchemaError(fmt::format("{}: duplicate image id", where));
    }
  }

  ClassStats stats;
  std::unordered_map<int64_t, size_t> index;
  for (const auto& [id, name] : category_names) {
    index.emplace(id, stats.class_ids.size());
    stats.class_ids.push_back(id);
    stats.names.push_back(name);
  }
  const size_t c = stats.class_ids.size();
  stats.instance_counts.assign(c, 0);
  stats.image_counts.assign(c, 0);
  std::vector<std::unordered_set<int64_t>> seen_images(c);

  for (size_t i = 0; i < annotations.size(); ++i) {
    const auto where = fmt::format("annotations[{}]", i);
    const json& rec = annotations[i];
    if (!rec.is_object()) throw ParseError(where + ": must be an object");
    require_int(rec, "id", where);
    const int64_t image_id = require_int(rec, "image_id", where);
    const int64_t category_id = require_int(rec, "category_id", where);
    auto it = index.find(category_id);
    if (it == index.end()) {
      throw SchemaError(fmt::format("{}: unknown category_id {}", where, category_id));
    }
    if (!image_ids.contains(image_id)) {
      throw SchemaError(fmt::format("{}: unknown image_id {}", where, image_id));
    }
    ++stats.instance_counts[it->second];
    seen_images[it->second].insert(image_id);
  }
  for (size_t k = 0; k < c; ++k) stats.image_counts[k] = static_cast<int64_t>(seen_images[k].size());
  stats.total_instances =
      std::accumulate(stats.instance_counts.begin(), stats.instance_counts.end(), int64_t{0});
  stats.total_images = static_cast<int64_t>(image_ids.size());
  stats.validate();
  return stats;
}

ClassStats ingest_annotations_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError(fmt::format("cannot open annotation file {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return ingest_annotations(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const SchemaError& e) {
    throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

WeightingFactors effective_number_alpha(const ClassStats& stats, double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw ArgumentError(fmt::format("beta must lie in [0, 1), got {}", beta));
  }
  WeightingFactors w;
  w.method = WeightingMethod::EffectiveNumber;
  w.beta = beta;
  w.alphas.reserve(stats.num_classes());
  for (size_t i = 0; i < stats.num_classes(); ++i) {
    if (stats.instance_counts[i] == 0) {
      throw ZeroCountError(fmt::format(
          "class {} has no instances; use the inverse-frequency weighting (which caps "
          "zero-count classes) or exclude the class",
          stats.class_ids[i]));
    }
    w.alphas.push_back(effnum_alpha_single(beta, stats.instance_counts[i]));
  }
  return w;
}

WeightingFactors inverse_frequency_alpha(const ClassStats& stats) {
  if (stats.total_instances <= 0) throw EmptyDatasetError("dataset has no annotated instances");
  WeightingFactors w;
  w.method = WeightingMethod::InverseFrequencyApprox;
  const double n = static_cast<double>(stats.total_instances);
  const double c = static_cast<double>(stats.num_classes());
  for (size_t i = 0; i < stats.num_classes(); ++i) {
    int64_t count = stats.instance_counts[i];
    if (count == 0) {
      w.capped_classes.push_back(i);
      count = 1;
    }
    w.alphas.push_back(n / (c * static_cast<double>(count)));
  }
  return w;
}

LimitCheckReport limit_consistency_check(const ClassStats& stats,
                                         const std::vector<double>& beta_sequence,
                                         double tolerance) {
  const auto inv = inverse_frequency_alpha(stats);
  LimitCheckReport report;
  report.tolerance = tolerance;
  const long double n = static_cast<long double>(stats.total_instances);
  for (double beta : beta_sequence) {
    const auto eff = effective_number_alpha(stats, beta);
    long double weighted = 0.0L;
    for (size_t i = 0; i < eff.size(); ++i) {
      weighted += static_cast<long double>(stats.instance_counts[i]) * eff.alphas[i];
    }
    LimitCheckRow row;
    row.beta = beta;
    for (size_t i = 0; i < eff.size(); ++i) {
      const long double normalized = eff.alphas[i] * n / weighted;
      const double ratio = static_cast<double>(normalized / inv.alphas[i]);
      row.ratios.push_back(ratio);
      row.max_deviation = std::max(row.max_deviation, std::abs(ratio - 1.0));
    }
    report.rows.push_back(std::move(row));
  }
  bool monotone = true;
  for (size_t r = 1; r < report.rows.size(); ++r) {
    if (report.rows[r].max_deviation > report.rows[r - 1].max_deviation + 1e-15) monotone = false;
  }
  report.converging =
      !report.rows.empty() && monotone && report.rows.back().max_deviation <= tolerance;
  return report;
}

HeadTailSplit split_head_tail(const ClassStats& stats, double tail_ratio) {
  if (!(tail_ratio > 0.0 && tail_ratio < 1.0)) {
    throw ArgumentError(fmt::format("tail_ratio must lie in (0, 1), got {}", tail_ratio));
  }
  if (stats.total_images <= 0) throw EmptyDatasetError("dataset has no images");
  HeadTailSplit split;
  const double total = static_cast<double>(stats.total_images);
  for (size_t i = 0; i < stats.num_classes(); ++i) {
    const double freq = static_cast<double>(stats.image_counts[i]) / total;
    (freq < tail_ratio ? split.tail : split.head).insert(stats.class_ids[i]);
  }
  return split;
}

void write_stats_csv(std::ostream& out, const ClassStats& stats, double beta) {
  const bool has_instances = stats.total_instances > 0;
  std::vector<double> inv;
  if (has_instances) inv = inverse_frequency_alpha(stats).alphas;
  out << "class_id,name,instances,images,alpha_effnum,alpha_invfreq\n";
  for (size_t i = 0; i < stats.num_classes(); ++i) {
    std::string name = stats.names[i];
    if (name.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char ch : name) {
        if (ch == '"') quoted += '"';
        quoted += ch;
      }
      name = quoted + "\"";
    }
    std::string eff;
    if (stats.instance_counts[i] > 0) {
      eff = fmt::format("{:.12g}", effnum_alpha_single(beta, stats.instance_counts[i]));
    }
    std::string invs = has_instances ? fmt::format("{:.12g}", inv[i]) : std::string();
    out << fmt::format("{},{},{},{},{},{}\n", stats.class_ids[i], name, stats.instance_counts[i],
                       stats.image_counts[i], eff, invs);
  }
}

}  // namespace bofl
