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

#include "anchorfuse/numeric/array.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "anchorfuse/errors.hpp"
#include "kernels.hpp"

namespace anchorfuse::numeric {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  if (!std::isfinite(fill)) throw NumericalError("Array fill value is not finite");
}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("Array: shape " + shape_str(shape_) + " needs " +
                         std::to_string(shape_size(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
  require_finite("Array");
}

Array::Array(Shape shape, std::initializer_list<double> data)
    : Array(std::move(shape), std::vector<double>(data)) {}

Array Array::unchecked(Shape shape, std::vector<double> data) {
  Array a;
  a.shape_ = std::move(shape);
  a.data_ = std::move(data);
  return a;
}

Array Array::scalar(double value) { return Array(Shape{1}, std::vector<double>{value}); }

Array Array::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Array::matrix: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Array({r, c}, std::move(data));
}

std::size_t Array::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("Array::dim: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape_));
  }
  return shape_[axis];
}

double Array::item() const {
  if (data_.size() != 1) throw DimensionError("Array::item on shape " + shape_str(shape_));
  return data_[0];
}

bool Array::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Array::require_finite(const std::string& what) const {
  if (!all_finite()) throw NumericalError(what + ": non-finite value");
}

Array Array::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
  }
  return unchecked(std::move(shape), data_);
}

Array matmul(const Array& a, const Array& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(n * m, 0.0);
  kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), n, k, m);
  return Array::unchecked({n, m}, std::move(out));
}

Array softmax_lastdim(const Array& x) {
  if (x.last_dim() < 1) throw DimensionError("softmax_lastdim: empty last axis");
  std::vector<double> out(x.size());
  kernels::softmax_rows(x.data().data(), out.data(), x.outer_size(), x.last_dim());
  return Array::unchecked(x.shape(), std::move(out));
}

SampleResult bilinear_sample(const Array& featmap, std::span<const double> uv) {
  if (featmap.rank() != 3) throw DimensionError("bilinear_sample: featmap must be H×W×C");
  if (uv.size() % 2 != 0) throw DimensionError("bilinear_sample: uv must hold (u,v) pairs");
  const std::size_t n = uv.size() / 2;
  const std::size_t channels = featmap.dim(2);
  SampleResult res{Array({n, channels}), std::vector<bool>(n, false)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto taps = kernels::bilinear_taps(featmap.dim(0), featmap.dim(1), uv[2 * i], uv[2 * i + 1]);
    if (!taps.valid) continue;
    res.valid[i] = true;
    double* dst = res.values.data().data() + i * channels;
    for (const auto& t : taps.taps) {
      if (t.weight == 0.0 || t.offset < 0) continue;
      const double* src = featmap.data().data() + static_cast<std::size_t>(t.offset) * channels;
      for (std::size_t c = 0; c < channels; ++c) dst[c] += t.weight * src[c];
    }
  }
  return res;
}

}  // namespace anchorfuse::numeric
