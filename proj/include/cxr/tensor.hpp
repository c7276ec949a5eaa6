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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cxr {

using Shape = std::vector<std::int64_t>;

/// Dense row-major float32 tensor. Value semantics (copies are deep); the
/// layer graph passes tensors by reference and reuses buffers across steps.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) { resize(std::move(shape)); }

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float v);

  /// Reshapes, reallocating only when the element count changes. New elements
  /// are zero; existing contents are preserved only if numel is unchanged.
  void resize(Shape shape);

  void fill(float v);
  void zero() { fill(0.0f); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  bool empty() const { return data_.empty(); }

  /// dim(-1) is the innermost dimension.
  std::int64_t dim(int i) const;
  const Shape& shape() const { return shape_; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// "(2, 3, 224, 224)" — for error messages.
  std::string shape_str() const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// numel implied by a shape.
std::int64_t shape_numel(const Shape& shape);

}  // namespace cxr
