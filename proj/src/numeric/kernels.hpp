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

// Internal loop kernels shared by the plain and traced ops. Every reduction
// runs in a fixed order so results are bit-reproducible.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

namespace anchorfuse::numeric::kernels {

// out[n×m] += a[n×k] · b[k×m]
inline void gemm_nn(const double* a, const double* b, double* out, std::size_t n, std::size_t k,
                    std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = out + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[n×k] += g[n×m] · b[k×m]^T
inline void gemm_nt(const double* g, const double* b, double* out, std::size_t n, std::size_t m,
                    std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* grow = g + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
      out[i * k + p] += acc;
    }
  }
}

// out[k×m] += a[n×k]^T · g[n×m]
inline void gemm_tn(const double* a, const double* g, double* out, std::size_t n, std::size_t k,
                    std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* grow = g + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* orow = out + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * grow[j];
    }
  }
}

inline void softmax_rows(const double* x, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* orow = out + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      orow[c] = std::exp(xr[c] - mx);
      total += orow[c];
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < cols; ++c) orow[c] *= inv;
  }
}

struct BilinearTap {
  long offset = -1;  // row * W + col, -1 when outside the grid
  double weight = 0.0;
  double dweight_du = 0.0;
  double dweight_dv = 0.0;
};

struct BilinearTaps {
  bool valid = false;
  std::array<BilinearTap, 4> taps{};
};

inline BilinearTaps bilinear_taps(std::size_t height, std::size_t width, double u, double v) {
  BilinearTaps out;
  if (!(u >= 0.0 && u < static_cast<double>(width) && v >= 0.0 && v < static_cast<double>(height))) {
    return out;
  }
  out.valid = true;
  const double u0 = std::floor(u), v0 = std::floor(v);
  const double du = u - u0, dv = v - v0;
  const long col = static_cast<long>(u0), row = static_cast<long>(v0);
  const long w = static_cast<long>(width), h = static_cast<long>(height);
  auto offset = [&](long r, long c) { return (r < h && c < w) ? r * w + c : -1L; };
  out.taps[0] = {offset(row, col), (1 - du) * (1 - dv), -(1 - dv), -(1 - du)};
  out.taps[1] = {offset(row, col + 1), du * (1 - dv), (1 - dv), -du};
  out.taps[2] = {offset(row + 1, col), (1 - du) * dv, -dv, (1 - du)};
  out.taps[3] = {offset(row + 1, col + 1), du * dv, dv, du};
  return out;
}

}  // namespace anchorfuse::numeric::kernels
