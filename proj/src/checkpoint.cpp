// Copyright 2026 The cxr Authors
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

#include "cxr/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "cxr/common.hpp"

namespace cxr {

namespace {

constexpr char kMagic[4] = {'C', 'X', 'R', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxNdim = 16;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FileError(fmt::format("truncated blob ({}): {}", what, path));
  return v;
}

}  // namespace

void save_tensor_blob(const std::string& path, const TensorMap& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError(fmt::format("cannot write blob: {}", path));
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.empty() || name.size() > kMaxNameLen)
      throw ValidationError(fmt::format("blob entry name unusable: '{}'", name));
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::uint8_t>(0));  // dtype f32
    put(out, static_cast<std::uint32_t>(t.ndim()));
    for (int d = 0; d < t.ndim(); ++d) put(out, t.dim(d));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(float) * t.numel()));
  }
  if (!out) throw FileError(fmt::format("write failed: {}", path));
}

TensorMap load_tensor_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError(fmt::format("cannot read blob: {}", path));
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError(fmt::format("not a weights blob (bad magic): {}", path));
  const auto version = get<std::uint32_t>(in, path, "version");
  if (version != kVersion)
    throw ValidationError(
        fmt::format("unsupported blob version {} in {}", version, path));
  const auto count = get<std::uint64_t>(in, path, "count");

  TensorMap out;
  out.reserve(count);
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name_len = get<std::uint32_t>(in, path, "name length");
    if (name_len == 0 || name_len > kMaxNameLen)
      throw ValidationError(
          fmt::format("blob entry {} has name length {}: {}", e, name_len, path));
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw FileError(fmt::format("truncated blob (name): {}", path));
    const auto dtype = get<std::uint8_t>(in, path, "dtype");
    if (dtype != 0)
      throw ValidationError(
          fmt::format("blob entry '{}' has unsupported dtype {}: {}", name,
                      dtype, path));
    const auto ndim = get<std::uint32_t>(in, path, "ndim");
    if (ndim > kMaxNdim)
      throw ValidationError(
          fmt::format("blob entry '{}' has {} dims: {}", name, ndim, path));
    Shape shape(ndim);
    for (auto& d : shape) {
      d = get<std::int64_t>(in, path, "dim");
      if (d < 0)
        throw ValidationError(
            fmt::format("blob entry '{}' has negative dim: {}", name, path));
    }
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(float) * t.numel()));
    if (!in) throw FileError(fmt::format("truncated blob (data): {}", path));
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace cxr
