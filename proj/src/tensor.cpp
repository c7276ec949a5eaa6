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

#include "cxr/tensor.hpp"

#include <algorithm>

#include "cxr/common.hpp"

namespace cxr {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ValidationError("negative tensor dimension");
    n *= d;
  }
  return n;
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, float v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

void Tensor::resize(Shape shape) {
  const std::int64_t n = shape_numel(shape);
  shape_ = std::move(shape);
  if (static_cast<std::int64_t>(data_.size()) != n) data_.assign(static_cast<std::size_t>(n), 0.0f);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

std::int64_t Tensor::dim(int i) const {
  const int nd = ndim();
  if (i < 0) i += nd;
  if (i < 0 || i >= nd) throw ValidationError("tensor dim index out of range for shape " + shape_str());
  return shape_[static_cast<std::size_t>(i)];
}

std::string Tensor::shape_str() const {
  std::string s = "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape_[i]);
  }
  s += ")";
  return s;
}

}  // namespace cxr
