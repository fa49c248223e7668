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

#include "anchorfuse/attention/attention.hpp"

#include <cmath>

#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/compose.hpp"

namespace anchorfuse::attention {

using namespace numeric;

void add_attention_params(ParamStore& store, const std::string& prefix, std::size_t channels,
                          std::size_t heads) {
  if (heads == 0 || channels % heads != 0) {
    throw DimensionError("attention: " + std::to_string(heads) + " heads do not divide width " +
                         std::to_string(channels));
  }
  for (const char* n : {".q", ".k", ".v", ".o"}) store.add_mlp(prefix + n, {channels, channels});
  store.add_mlp(prefix + ".gamma", {channels, heads});
  store.add_mlp(prefix + ".ffn", {channels, 2 * channels, channels});
}

Var biased_attention(Tape& tape, const ParamStore& store, const std::string& prefix, Var queries,
                     Var keys, const Array& distances, const AttentionOptions& options) {
  const std::size_t channels = queries.value().dim(1);
  const std::size_t heads = options.heads;
  if (heads == 0 || channels % heads != 0) {
    throw DimensionError("attention: " + std::to_string(heads) + " heads do not divide width " +
                         std::to_string(channels));
  }
  if (keys.value().dim(1) != channels) {
    throw DimensionError("attention: key width " + std::to_string(keys.value().dim(1)) + " != query width " +
                         std::to_string(channels));
  }
  const std::size_t nq = queries.value().dim(0), nk = keys.value().dim(0);
  if (distances.rank() != 2 || distances.dim(0) != nq || distances.dim(1) != nk) {
    throw DimensionError("attention: distance matrix " + shape_str(distances.shape()));
  }
  const std::size_t width = channels / heads;

  Var qn = layer_norm(queries);
  Var kn = keys.id() == queries.id() ? qn : layer_norm(keys);
  Var q = mlp_forward(tape, store, prefix + ".q", qn);
  Var k = mlp_forward(tape, store, prefix + ".k", kn);
  Var v = mlp_forward(tape, store, prefix + ".v", kn);

  Var gamma;
  if (options.gamma) {
    if (options.gamma->size() != heads) throw DimensionError("attention: gamma override needs one value per head");
    gamma = tape.constant(Array({1, heads}, *options.gamma));
  } else {
    gamma = mlp_forward(tape, store, prefix + ".gamma", mean(qn, 0), Activation::kSigmoid);
  }

  Array log_dist(distances.shape());
  for (std::size_t i = 0; i < distances.size(); ++i) log_dist[i] = std::log1p(distances[i]);
  Var bias = tape.constant(std::move(log_dist));
  Var wo = tape.param(store, prefix + ".o.0.weight");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width));

  Var out;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * width, (h + 1) * width);
    Var kh = slice_cols(k, h * width, (h + 1) * width);
    Var vh = slice_cols(v, h * width, (h + 1) * width);
    Var logits = sub(scale(matmul(qh, transpose(kh)), inv_sqrt), mul(bias, gather(gamma, {h}, {1})));
    Var weights = softmax_lastdim(logits);
    if (options.weights_out) options.weights_out->push_back(weights.value());
    std::vector<std::size_t> rows(width);
    for (std::size_t r = 0; r < width; ++r) rows[r] = h * width + r;
    Var head = matmul(matmul(weights, vh), take_rows(wo, rows));
    out = out.defined() ? add(out, head) : head;
  }
  return add(out, tape.param(store, prefix + ".o.0.bias"));
}

Var sasa(Tape& tape, const ParamStore& store, const std::string& prefix,
         const std::vector<AnchorBox>& anchors, Var features, const AttentionOptions& options) {
  if (anchors.empty()) return features;
  const Array d = geometry::bev_distance_matrix(anchors, anchors);
  return add(features, biased_attention(tape, store, prefix, features, features, d, options));
}

Var saca(Tape& tape, const ParamStore& store, const std::string& prefix,
         const std::vector<AnchorBox>& anchors, Var features,
         const std::vector<AnchorBox>& received_anchors, Var received_features,
         const AttentionOptions& options) {
  if (received_anchors.empty()) return features;
  if (received_features.value().dim(1) != features.value().dim(1)) {
    throw DimensionError("saca: received feature width differs from ego width");
  }
  const Array d = geometry::bev_distance_matrix(anchors, received_anchors);
  return add(features, biased_attention(tape, store, prefix, features, received_features, d, options));
}

Var feed_forward(Tape& tape, const ParamStore& store, const std::string& prefix, Var features) {
  return add(features, mlp_forward(tape, store, prefix + ".ffn", layer_norm(features)));
}

}  // namespace anchorfuse::attention
