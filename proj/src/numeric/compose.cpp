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

#include "anchorfuse/numeric/compose.hpp"

#include "anchorfuse/errors.hpp"

namespace anchorfuse::numeric {

Var scalar(Tape& tape, double value) { return tape.constant(Array::scalar(value)); }

Var neg(Var x) { return scale(x, -1.0); }

Var sub(Var a, Var b) { return add(a, neg(b)); }

Var scale(Var x, double s) { return mul(x, scalar(x.tape(), s)); }

Var add_scalar(Var x, double s) { return add(x, scalar(x.tape(), s)); }

Var square(Var x) { return mul(x, x); }

Var abs(Var x) { return add(relu(x), relu(neg(x))); }

Var softplus(Var x) {
  return add(relu(x), log(add_scalar(exp(neg(abs(x))), 1.0)));
}

Var log_sigmoid(Var x) { return neg(softplus(neg(x))); }

Var reciprocal(Var x) { return exp(neg(log(x))); }

Var divide(Var a, Var b) { return mul(a, reciprocal(b)); }

Var layer_norm(Var x, double eps) {
  if (x.value().rank() != 2) throw DimensionError("layer_norm expects a rank-2 input");
  Var centered = sub(x, mean(x, 1));
  Var var = add_scalar(mean(square(centered), 1), eps);
  return mul(centered, exp(scale(log(var), -0.5)));
}

Var transpose(Var x) {
  const Array& v = x.value();
  if (v.rank() != 2) throw DimensionError("transpose expects a rank-2 input");
  const std::size_t rows = v.dim(0), cols = v.dim(1);
  std::vector<std::size_t> index(rows * cols);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) index[c * rows + r] = r * cols + c;
  }
  return gather(x, std::move(index), {cols, rows});
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Array& v = x.value();
  if (v.rank() != 2 || begin > end || end > v.dim(1)) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + shape_str(v.shape()));
  }
  const std::size_t rows = v.dim(0), cols = v.dim(1), width = end - begin;
  std::vector<std::size_t> index;
  index.reserve(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = begin; c < end; ++c) index.push_back(r * cols + c);
  }
  return gather(x, std::move(index), {rows, width});
}

Var take_rows(Var x, const std::vector<std::size_t>& rows) {
  const Array& v = x.value();
  if (v.rank() != 2) throw DimensionError("take_rows expects a rank-2 input");
  const std::size_t cols = v.dim(1);
  std::vector<std::size_t> index;
  index.reserve(rows.size() * cols);
  for (std::size_t r : rows) {
    for (std::size_t c = 0; c < cols; ++c) index.push_back(r * cols + c);
  }
  return gather(x, std::move(index), {rows.size(), cols});
}

Var detach(Var x) { return x.tape().constant(x.value()); }

}  // namespace anchorfuse::numeric
