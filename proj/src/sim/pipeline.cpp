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

#include "anchorfuse/sim/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "anchorfuse/attention/attention.hpp"
#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/compose.hpp"
#include "anchorfuse/numeric/rng.hpp"

namespace anchorfuse::sim {

using numeric::Array;

namespace {

constexpr const char* kCameraPrefix = "camera";

}  // namespace

std::string layer_prefix(std::size_t layer) { return "layer" + std::to_string(layer); }

ParamStore init_params(const ExperimentConfig& cfg) {
  cfg.validate();
  ParamStore store(cfg.seed);
  const std::size_t c = cfg.channels;
  afb::add_camera_weight_params(store, kCameraPrefix);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    afb::add_afb_params(store, p + ".afb", c, cfg.learnable_points);
    attention::add_attention_params(store, p + ".self", c, cfg.heads);
    collab::add_confidence_params(store, p + ".confidence", c);
    collab::add_encoder_params(store, p + ".encoder", c);
    attention::add_attention_params(store, p + ".cross", c, cfg.heads);
    detector::add_head_params(store, p + ".head", c);
  }
  return store;
}

std::vector<AnchorBox> initial_anchors(const ExperimentConfig& cfg) {
  numeric::Rng rng(cfg.anchor_seed);
  std::vector<AnchorBox> out;
  out.reserve(cfg.anchors);
  for (std::size_t i = 0; i < cfg.anchors; ++i) {
    const double x = rng.uniform(-cfg.range_x / 2, cfg.range_x / 2);
    const double y = rng.uniform(-cfg.range_y / 2, cfg.range_y / 2);
    const double z = rng.uniform(0.0, 2.0);
    out.push_back(AnchorBox::make(x, y, z, 1.0, 1.0, 1.0, 1.0, 0.0));
  }
  return out;
}

ForwardResult forward(Tape& tape, const ParamStore& store, const ExperimentConfig& cfg, const Scene& scene,
                      const std::vector<afb::ViewFeatureStack>& views, const PipelineOptions& options) {
  const std::size_t n = scene.agents();
  if (views.size() != n) throw DimensionError("forward: one view stack per agent required");
  const double hx = cfg.range_x / 2, hy = cfg.range_y / 2;
  const collab::Normalizer norm{hx, hy};
  attention::AttentionOptions attn;
  attn.heads = cfg.heads;
  if (!options.distance_bias) attn.gamma = std::vector<double>(cfg.heads, 0.0);
  const std::size_t top_k = options.top_k ? options.top_k : cfg.top_k;

  std::vector<std::vector<AnchorBox>> anchors(n, initial_anchors(cfg));
  std::vector<Var> feats;
  std::vector<std::vector<Var>> maps(n);
  for (std::size_t a = 0; a < n; ++a) {
    feats.push_back(tape.constant(Array({cfg.anchors, cfg.channels})));
    for (const auto& m : views[a].maps) maps[a].push_back(tape.constant(m));
  }

  ForwardResult result;
  result.agents.assign(n, {});
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    std::vector<LayerTrace> traces(n);
    for (std::size_t a = 0; a < n; ++a) {
      traces[a].layer = l;
      Var f = add(feats[a], afb::anchor_featuring(tape, store, p + ".afb", kCameraPrefix, anchors[a], feats[a],
                                                  maps[a], views[a].cameras));
      f = attention::sasa(tape, store, p + ".self", anchors[a], f, attn);
      feats[a] = attention::feed_forward(tape, store, p + ".self", f);
    }

    const bool fused = options.collaborate && n > 1 && cfg.fused_layers.count(l + 1) != 0;
    if (fused) {
      std::vector<collab::AnchorMessage> inbox;
      std::vector<Var> sent(n);
      for (std::size_t a = 0; a < n; ++a) {
        Var logits = collab::anchor_confidence_logits(tape, store, p + ".confidence", feats[a]);
        traces[a].confidence_logits = logits;
        std::vector<double> scores(logits.value().size());
        for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = 1.0 / (1.0 + std::exp(-logits.value()[i]));
        collab::AnchorMessage msg =
            collab::build_message(static_cast<std::uint32_t>(a), static_cast<std::uint16_t>(l), anchors[a],
                                  feats[a].value(), scores, top_k, cfg.tau);
        if (options.silence) {
          msg.boxes.clear();
          msg.confidences.clear();
          msg.features.clear();
        }
        if (msg.count() > 0) sent[a] = numeric::take_rows(feats[a], collab::message_rows(scores, top_k, cfg.tau));
        const auto bytes = collab::encode_message(msg);
        result.bandwidth.push_back({a, l, msg.count(), bytes.size()});
        inbox.push_back(collab::decode_message(bytes));
      }
      std::vector<Var> fused_feats;
      for (std::size_t a = 0; a < n; ++a) {
        std::vector<collab::SelectedSet> parts;
        for (std::size_t b = 0; b < n; ++b) {
          if (b == a) continue;
          auto part = collab::anchor_encoder(tape, store, p + ".encoder", scene.transforms[a][b], inbox[b], norm,
                                             sent[b], options.exact_wire);
          if (!options.location_encoding && !part.empty()) part.features = sent[b];
          parts.push_back(std::move(part));
        }
        const collab::SelectedSet sel = collab::merge(tape, parts);
        Var f = options.laaf ? collab::laaf(tape, anchors[a], feats[a], sel) : feats[a];
        if (options.saca && !sel.empty()) {
          f = attention::saca(tape, store, p + ".cross", anchors[a], f, sel.anchors, sel.features, attn);
          f = attention::feed_forward(tape, store, p + ".cross", f);
        }
        fused_feats.push_back(f);
      }
      feats = std::move(fused_feats);
    }

    for (std::size_t a = 0; a < n; ++a) {
      traces[a].anchors = anchors[a];
      traces[a].heads = detector::decode_heads(tape, store, p + ".head", anchors[a], feats[a], hx, hy);
      anchors[a] = detector::refine_anchors(traces[a].heads.boxes.value(), cfg.min_anchor_size);
      result.agents[a].push_back(std::move(traces[a]));
    }
  }
  return result;
}

Var pipeline_loss(Tape& tape, const ExperimentConfig& cfg, const Scene& scene, const ForwardResult& result,
                  const detector::LossWeights& weights) {
  Var total = numeric::scalar(tape, 0.0);
  for (std::size_t a = 0; a < result.agents.size(); ++a) {
    const auto gts = agent_ground_truth(scene, a, cfg);
    const double norm = static_cast<double>(std::max<std::size_t>(1, gts.size()));
    for (const auto& trace : result.agents[a]) {
      const auto assignment =
          detector::hungarian_match(trace.heads.boxes.value(), trace.heads.logits.value(), gts, weights);
      total = add(total, detector::set_loss(tape, trace.heads, gts, assignment, weights, norm));
      if (trace.confidence_logits.defined()) {
        Array targets(trace.confidence_logits.shape());
        Array keep(trace.confidence_logits.shape(), -1.0);
        for (std::size_t j : assignment.pred_of_gt) {
          targets[j] = -1.0;
          keep[j] = 0.0;
        }
        // -(t log s + (1 - t) log(1 - s)) with t in {0, 1}
        Var x = trace.confidence_logits;
        Var pos = mul(numeric::log_sigmoid(x), tape.constant(std::move(targets)));
        Var negt = mul(numeric::log_sigmoid(numeric::neg(x)), tape.constant(std::move(keep)));
        total = add(total, numeric::scale(sum(add(pos, negt)), 1.0 / norm));
      }
    }
  }
  return total;
}

Detections ego_detections(const ExperimentConfig& cfg, const ForwardResult& result) {
  const auto& last = result.agents.at(0).back();
  Detections out;
  out.boxes = detector::refine_anchors(last.heads.boxes.value(), cfg.min_anchor_size);
  for (double logit : last.heads.logits.value().data()) out.confidences.push_back(1.0 / (1.0 + std::exp(-logit)));
  return out;
}

}  // namespace anchorfuse::sim
