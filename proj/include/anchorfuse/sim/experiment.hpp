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

// Training, evaluation and ablation sweeps over generated scenes.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "anchorfuse/collab/collab.hpp"
#include "anchorfuse/detector/detector.hpp"
#include "anchorfuse/sim/pipeline.hpp"

namespace anchorfuse::sim {

/// Seed of the index-th scene of a stream.
std::uint64_t scene_seed(std::uint64_t base, std::uint64_t index);

struct TrainOptions {
  /// Starting point; init_params(cfg) when null.
  const ParamStore* init = nullptr;
  /// Receives "step loss grad_norm" lines.
  std::ostream* loss_log = nullptr;
  /// Called every cfg.log_every steps and on the last one.
  std::function<void(std::size_t step, double loss)> progress;
};

struct TrainResult {
  ParamStore params;
  std::vector<double> losses;  // mean batch loss before each update
};

/// SGD with momentum on batches of fresh scenes, global-norm clipping.
/// Throws NumericalError when the loss stops being finite.
TrainResult train(const ExperimentConfig& cfg, const TrainOptions& options = {});

/// Mean pipeline loss over the scenes of one training step.
double batch_loss(const ExperimentConfig& cfg, const ParamStore& store, std::size_t step);

struct SceneMetrics {
  std::size_t scene = 0;
  std::size_t gts = 0;
  std::size_t occluded = 0;  // ego gts hidden from the ego sensor
  std::vector<double> ap;
};

struct SceneBandwidth {
  std::size_t scene = 0;
  collab::BandwidthRecord record;
};

struct EvalResult {
  std::vector<double> thresholds{0.3, 0.5, 0.7};
  std::vector<double> ap;  // pooled over all scenes
  std::vector<SceneMetrics> scenes;
  std::vector<SceneBandwidth> bandwidth_rows;
  collab::BandwidthReport bandwidth;
  std::vector<detector::DetectionRecord> detections;
};

/// Ego detections on cfg.eval_scenes scenes drawn from cfg.eval_seed.
EvalResult evaluate(const ExperimentConfig& cfg, const ParamStore& store, const PipelineOptions& options = {});

struct AblationRow {
  std::string axis;
  std::string value;
  std::vector<double> ap;
  double mean_message_bytes = 0;
};

/// Re-evaluates a trained model with one setting changed at a time.
/// Axes: "K" (top-K), "M" (anchors), "N" (agents) and "component" with values
/// full, none, no_laaf, no_saca, no_location, no_distance_bias.
/// Throws ConfigError on an unknown axis or value.
std::vector<AblationRow> ablate(const ExperimentConfig& cfg, const ParamStore& store, const std::string& axis,
                                const std::vector<std::string>& values);

/// Whether the middle entry of a three-point K sweep is >= both ends in AP@0.5.
bool interior_is_best(const std::vector<AblationRow>& rows);

void write_metrics_csv(std::ostream& out, const std::vector<std::pair<std::string, const EvalResult*>>& runs);
void write_bandwidth_csv(std::ostream& out, const EvalResult& result);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace anchorfuse::sim
