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

// Reverse-mode differentiation over a closed op set: matmul, add, mul, relu,
// sigmoid, log, exp, softmax, bilinear_sample, sum/mean reductions,
// concatenate and gather (reshape is a gather with the identity index).
// Everything else in the pipeline is composed from these (see compose.hpp).

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "anchorfuse/numeric/array.hpp"

namespace anchorfuse::numeric {

class Tape;
class ParamStore;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;

  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool defined() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients of one backward pass, keyed by parameter name. Every parameter
/// of the store the tape read from is present; untouched ones are zero.
struct Gradients {
  std::map<std::string, Array> params;

  const Array& at(const std::string& name) const;
};

class Tape {
 public:
  /// Accumulates into the node's gradient buffers. Called once per node, in
  /// reverse creation order.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  /// With `checked` set, every recorded value is scanned for NaN/Inf.
  explicit Tape(bool checked = false) : checked_(checked) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array value);
  /// Leaf that receives a gradient (used for inputs under test).
  Var variable(Array value);
  /// Leaf bound to a named parameter. Reading the same name twice returns the
  /// same node.
  Var param(const ParamStore& store, const std::string& name);

  /// Runs the reverse sweep from `output` seeded with `seed` (same shape as the
  /// output). Throws DimensionError on a seed shape mismatch.
  Gradients backward(Var output, const Array& seed);
  /// Scalar output, seed 1.
  Gradients backward(Var output);

  /// Gradient accumulated at a node by the last backward call (zeros if the
  /// node received none).
  Array grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool checked() const noexcept { return checked_; }

  // Op-implementation interface.
  Var push(Array value, std::vector<std::size_t> parents, BackwardFn backward);
  const Array& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, allocated as zeros on first use.
  Array& grad_buffer(std::size_t id);
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }

 private:
  struct Node {
    Array value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    Array grad;
    bool has_grad = false;
  };

  std::vector<Node> nodes_;
  const ParamStore* store_ = nullptr;
  std::unordered_map<std::string, std::size_t> param_nodes_;
  bool checked_ = false;
};

// --- closed op set ------------------------------------------------------

/// Rank-2 matrix product. Throws DimensionError when inner extents differ.
Var matmul(Var a, Var b);
/// Elementwise sum with numpy-style broadcasting.
Var add(Var a, Var b);
/// Elementwise product with numpy-style broadcasting.
Var mul(Var a, Var b);
Var relu(Var x);
Var sigmoid(Var x);
/// Natural log; inputs must be positive.
Var log(Var x);
Var exp(Var x);
Var softmax_lastdim(Var x);
/// Samples an H×W×C map at [n,2] (u,v) locations. Differentiable in both the
/// map values and the locations; invalid locations give zero rows and zero
/// gradient.
Var bilinear_sample(Var featmap, Var uv);
/// Sum of all entries, shape [1].
Var sum(Var x);
/// Sum along `axis`, keeping it with extent 1.
Var sum(Var x, std::size_t axis);
Var mean(Var x);
Var mean(Var x, std::size_t axis);
/// Concatenation along `axis`; other extents must agree.
Var concat(const std::vector<Var>& parts, std::size_t axis);
/// out.flat[i] = x.flat[index[i]], viewed with `shape`.
Var gather(Var x, std::vector<std::size_t> index, Shape shape);
Var reshape(Var x, Shape shape);
/// Forwards `value` (same shape as x) and passes gradients to x unchanged.
/// Used where a lossy copy of x travels forward, e.g. 32-bit messages.
Var straight_through(Var x, Array value);

}  // namespace anchorfuse::numeric
