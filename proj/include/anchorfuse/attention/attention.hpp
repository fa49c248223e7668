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

// Multi-head attention whose logits are penalized by gamma_h * log(1 + D),
// D being BEV distances between query and key anchors.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "anchorfuse/geometry/geometry.hpp"
#include "anchorfuse/numeric/params.hpp"
#include "anchorfuse/numeric/tape.hpp"

namespace anchorfuse::attention {

using geometry::AnchorBox;
using numeric::Array;
using numeric::ParamStore;
using numeric::Tape;
using numeric::Var;

/// "<prefix>.q/.k/.v/.o" (C -> C), "<prefix>.gamma" (C -> H) and the
/// feed-forward block "<prefix>.ffn" (C -> 2C -> C). Throws DimensionError
/// unless H divides C.
void add_attention_params(ParamStore& store, const std::string& prefix, std::size_t channels,
                          std::size_t heads);

struct AttentionOptions {
  std::size_t heads = 4;
  /// Replaces the learned per-head gamma.
  std::optional<std::vector<double>> gamma;
  /// When set, receives one [queries, keys] weight matrix per head.
  std::vector<Array>* weights_out = nullptr;
};

/// Attention block output (no residual): queries from LN(queries), keys and
/// values from LN(keys), heads projected by their slice of W_o and summed.
Var biased_attention(Tape& tape, const ParamStore& store, const std::string& prefix, Var queries,
                     Var keys, const Array& distances, const AttentionOptions& options);

/// F + attention(F, F) over one agent's queries.
Var sasa(Tape& tape, const ParamStore& store, const std::string& prefix,
         const std::vector<AnchorBox>& anchors, Var features, const AttentionOptions& options);

/// F + attention(F, received). An empty received set returns `features`
/// untouched.
Var saca(Tape& tape, const ParamStore& store, const std::string& prefix,
         const std::vector<AnchorBox>& anchors, Var features,
         const std::vector<AnchorBox>& received_anchors, Var received_features,
         const AttentionOptions& options);

/// F + FFN(LN(F)).
Var feed_forward(Tape& tape, const ParamStore& store, const std::string& prefix, Var features);

}  // namespace anchorfuse::attention
