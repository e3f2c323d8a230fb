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

#include "bofl/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "bofl/error.hpp"

namespace bofl {

namespace {

constexpr std::array<char, 4> kMagic = {'B', 'O', 'F', 'T'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kFloat32 = 1;

template <class T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  for (size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <class T>
T get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw ParseError(fmt::format("tensor file truncated while reading {}", what));
  }
  T value = 0;
  for (size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

uint64_t FloatTensor::element_count() const {
  return std::accumulate(dims.begin(), dims.end(), uint64_t{1}, std::multiplies<>());
}

void write_tensor(std::ostream& out, std::span<const uint64_t> dims, std::span<const float> data) {
  const uint64_t n = std::accumulate(dims.begin(), dims.end(), uint64_t{1}, std::multiplies<>());
  if (n != data.size()) {
    throw ShapeError(fmt::format("tensor shape holds {} elements but {} were given", n, data.size()));
  }
  out.write(kMagic.data(), kMagic.size());
  put_le<uint32_t>(out, kVersion);
  put_le<uint32_t>(out, kFloat32);
  put_le<uint32_t>(out, static_cast<uint32_t>(dims.size()));
  for (uint64_t d : dims) put_le<uint64_t>(out, d);
  for (float f : data) put_le<uint32_t>(out, std::bit_cast<uint32_t>(f));
}

void write_tensor_file(const std::filesystem::path& path, std::span<const uint64_t> dims,
                       std::span<const float> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  write_tensor(out, dims, data);
  if (!out) throw Error(fmt::format("write failed for {}", path.string()));
}

FloatTensor read_tensor(std::istream& in) {
  std::array<char, 4> magic;
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw ParseError("not a tensor file (bad magic)");
  }
  const auto version = get_le<uint32_t>(in, "version");
  if (version != kVersion) throw ParseError(fmt::format("unsupported tensor version {}", version));
  const auto type = get_le<uint32_t>(in, "element type");
  if (type != kFloat32) throw ParseError(fmt::format("unsupported element type {}", type));
  const auto rank = get_le<uint32_t>(in, "rank");
  FloatTensor t;
  for (uint32_t r = 0; r < rank; ++r) t.dims.push_back(get_le<uint64_t>(in, "dims"));
  const uint64_t n = t.element_count();
  t.data.resize(n);
  for (uint64_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(get_le<uint32_t>(in, "data"));
  return t;
}

FloatTensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  return read_tensor(in);
}

}  // namespace bofl
