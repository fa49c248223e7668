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

// Derived traced ops, built only from the closed set in tape.hpp.

#pragma once

#include <cstddef>
#include <vector>

#include "anchorfuse/numeric/tape.hpp"

namespace anchorfuse::numeric {

Var scalar(Tape& tape, double value);
Var neg(Var x);
Var sub(Var a, Var b);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var square(Var x);
/// relu(x) + relu(-x).
Var abs(Var x);
/// log(1 + e^x), overflow-free.
Var softplus(Var x);
/// log(sigmoid(x)) = -softplus(-x).
Var log_sigmoid(Var x);
/// 1/x for positive x, as exp(-log x).
Var reciprocal(Var x);
Var divide(Var a, Var b);
/// Layer normalization over the last axis of a rank-2 input, no affine.
Var layer_norm(Var x, double eps = 1e-5);

Var transpose(Var x);
/// Columns [begin, end) of a rank-2 input.
Var slice_cols(Var x, std::size_t begin, std::size_t end);
/// Selected rows (repeats allowed) of a rank-2 input.
Var take_rows(Var x, const std::vector<std::size_t>& rows);
/// A constant copy of x's value: gradient stops here.
Var detach(Var x);

}  // namespace anchorfuse::numeric
