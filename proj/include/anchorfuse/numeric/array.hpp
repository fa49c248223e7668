/*
 * Copyright 2026 The Anchorfuse Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace anchorfuse::numeric {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles.
///
/// The checked constructors reject a data length that disagrees with the
/// shape and any NaN/Inf entry. `Array::unchecked` skips the finiteness scan
/// and is meant for op implementations that already produce finite output.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> data);
  Array(Shape shape, std::initializer_list<double> data);

  static Array unchecked(Shape shape, std::vector<double> data);
  static Array scalar(double value);
  /// 2-D array from nested rows; all rows must have equal length.
  static Array matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  /// Extent of the last axis (1 for a rank-0 array).
  std::size_t last_dim() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  /// Product of all extents except the last.
  std::size_t outer_size() const noexcept { return size() / last_dim(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& vec() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  /// Row/column access for rank-2 arrays.
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

  /// Value of a single-element array.
  double item() const;

  bool all_finite() const noexcept;
  /// Throws NumericalError naming `what` when any entry is NaN/Inf.
  void require_finite(const std::string& what) const;

  /// Same data viewed with a new shape of equal size.
  Array reshaped(Shape shape) const;

  bool operator==(const Array& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Plain (untraced) matrix product of two rank-2 arrays.
Array matmul(const Array& a, const Array& b);

/// Plain softmax over the last axis with max-subtraction.
Array softmax_lastdim(const Array& x);

/// Result of sampling a feature map at continuous pixel locations.
struct SampleResult {
  Array values;              // [n, C]
  std::vector<bool> valid;   // n flags
};

/// Bilinear interpolation of an H×W×C map at (u, v) pixel coordinates, u
/// along the width axis and v along the height axis. A location is valid when
/// 0 <= u < W and 0 <= v < H; invalid locations yield a zero row. Neighbor
/// cells past the last row/column read as zero.
SampleResult bilinear_sample(const Array& featmap, std::span<const double> uv);

}  // namespace anchorfuse::numeric
