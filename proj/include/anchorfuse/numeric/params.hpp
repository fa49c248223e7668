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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "anchorfuse/numeric/array.hpp"
#include "anchorfuse/numeric/tape.hpp"

namespace anchorfuse::numeric {

/// Named parameter tensors in insertion order.
///
/// Random initialization draws from a stream derived from (seed, name), so a
/// tensor's initial value does not depend on what was registered before it.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Registers a tensor with an explicit value. Duplicate names throw.
  void add(const std::string& name, Array value);
  /// Registers a tensor drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  void add_uniform(const std::string& name, Shape shape, std::size_t fan_in);
  /// Registers an MLP with layer widths {in, hidden..., out}: tensors
  /// "<name>.<i>.weight" [w_i, w_{i+1}] and "<name>.<i>.bias" [w_{i+1}].
  void add_mlp(const std::string& name, const std::vector<std::size_t>& widths);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Array& get(const std::string& name) const;
  Array& get_mut(const std::string& name);
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  /// Total scalar count over all tensors.
  std::size_t count() const;
  /// Number of affine layers of MLP `name` (0 if absent).
  std::size_t mlp_depth(const std::string& name) const;

  /// Sets every entry of every tensor whose name starts with `prefix`.
  void fill(const std::string& prefix, double value);

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  /// Throws CodecError on a malformed stream.
  static ParamStore load(std::istream& in);
  static ParamStore load(const std::filesystem::path& path);

  bool operator==(const ParamStore& other) const;

 private:
  std::uint64_t seed_;
  std::vector<std::string> names_;
  std::vector<Array> values_;
  std::map<std::string, std::size_t> index_;
};

enum class Activation { kNone, kRelu, kSigmoid };

/// Affine layers of MLP `name` with ReLU between them and `final` after the
/// last one. `x` is [n, in]. Throws std::out_of_range for an unknown name and
/// DimensionError for a width mismatch.
Var mlp_forward(Tape& tape, const ParamStore& store, const std::string& name, Var x,
                Activation final = Activation::kNone);
/// Untraced evaluation.
Array mlp_forward(const ParamStore& store, const std::string& name, const Array& x,
                  Activation final = Activation::kNone);

}  // namespace anchorfuse::numeric
