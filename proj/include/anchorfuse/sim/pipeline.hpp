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

// The full L-layer multi-agent forward pass and its training loss.

#pragma once

#include <string>
#include <vector>

#include "anchorfuse/afb/afb.hpp"
#include "anchorfuse/collab/collab.hpp"
#include "anchorfuse/detector/detector.hpp"
#include "anchorfuse/numeric/params.hpp"
#include "anchorfuse/sim/config.hpp"
#include "anchorfuse/sim/scene.hpp"

namespace anchorfuse::sim {

using numeric::ParamStore;
using numeric::Tape;
using numeric::Var;

/// Parameter names are "camera" for the shared view-weight MLP and
/// "layer<l>.<block>" for everything per layer.
std::string layer_prefix(std::size_t layer);
ParamStore init_params(const ExperimentConfig& cfg);

/// The fixed initial anchors shared by all agents.
std::vector<AnchorBox> initial_anchors(const ExperimentConfig& cfg);

struct PipelineOptions {
  bool collaborate = true;
  /// Drops every anchor from every message, as if all confidences were
  /// below the threshold.
  bool silence = false;
  /// Receivers read the senders' 64-bit features instead of the decoded
  /// 32-bit copies. Off in normal runs; gradient checks need it.
  bool exact_wire = false;
  /// Overrides cfg.top_k when nonzero.
  std::size_t top_k = 0;
  // Component switches for ablations.
  bool laaf = true;
  bool saca = true;
  bool location_encoding = true;  // transform and anchor embeddings on receipt
  bool distance_bias = true;      // gamma forced to 0 when off
};

struct LayerTrace {
  std::size_t layer = 0;  // 0-based
  std::vector<AnchorBox> anchors;  // input anchors of the heads
  detector::HeadOutput heads;
  Var confidence_logits;  // defined on fused layers when messages were built
};

struct ForwardResult {
  std::vector<std::vector<LayerTrace>> agents;  // [agent][layer]
  std::vector<collab::BandwidthRecord> bandwidth;
};

/// Runs the pipeline for every agent of the scene. Feature maps enter as
/// constants.
ForwardResult forward(Tape& tape, const ParamStore& store, const ExperimentConfig& cfg, const Scene& scene,
                      const std::vector<afb::ViewFeatureStack>& views, const PipelineOptions& options);

/// Deep-supervised set loss summed over agents and layers, plus a binary
/// cross-entropy on the confidence generator with the same matched targets.
/// Every term is divided by max(1, #gt of that agent).
Var pipeline_loss(Tape& tape, const ExperimentConfig& cfg, const Scene& scene, const ForwardResult& result,
                  const detector::LossWeights& weights = {});

/// Last-layer ego detections.
struct Detections {
  std::vector<AnchorBox> boxes;
  std::vector<double> confidences;
};
Detections ego_detections(const ExperimentConfig& cfg, const ForwardResult& result);

}  // namespace anchorfuse::sim
