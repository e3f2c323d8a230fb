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

// Minimal multi-series line chart written straight to SVG text.

#pragma once

#include <string>
#include <vector>

namespace bofl {

struct LineSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 440;
  std::vector<LineSeries> series;
  // Emitted verbatim (escaped) as an XML comment after the root element.
  std::string comment;

  // Throws ArgumentError for empty charts, ragged series or non-finite points.
  std::string render() const;
};

std::string xml_escape(const std::string& text);

}  // namespace bofl
