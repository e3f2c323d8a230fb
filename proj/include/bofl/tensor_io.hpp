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

// Binary tensor file. All integers and floats little-endian:
//
//   offset  size        field
//   0       4           magic "BOFT"
//   4       4   uint32  format version (1)
//   8       4   uint32  element type (1 = float32)
//   12      4   uint32  rank R
//   16      8*R uint64  dims, outermost first
//   16+8R   4*N float32 elements, row-major, N = prod(dims)

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace bofl {

struct FloatTensor {
  std::vector<uint64_t> dims;
  std::vector<float> data;

  uint64_t element_count() const;
};

void write_tensor(std::ostream& out, std::span<const uint64_t> dims, std::span<const float> data);
void write_tensor_file(const std::filesystem::path& path, std::span<const uint64_t> dims,
                       std::span<const float> data);

// Throws ParseError on a truncated or malformed stream.
FloatTensor read_tensor(std::istream& in);
FloatTensor read_tensor_file(const std::filesystem::path& path);

}  // namespace bofl
