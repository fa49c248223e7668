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
#include <set>
#include <string>

namespace anchorfuse::sim {

inline constexpr int kConfigVersion = 1;

/// Every experiment knob. Parsed from flat "key = value" text; see
/// configs/default.cfg for the documented schema.
struct ExperimentConfig {
  // model
  std::size_t anchors = 48;           // M
  std::size_t channels = 32;          // C
  std::size_t heads = 4;              // H
  std::size_t learnable_points = 4;
  std::size_t layers = 3;             // L
  std::set<std::size_t> fused_layers = {1, 2};  // 1-based
  std::size_t top_k = 10;             // K
  double tau = 0.5;
  double min_anchor_size = 0.2;
  std::uint64_t anchor_seed = 7;

  // scene
  std::size_t agents = 2;             // N
  double range_x = 32.0;
  double range_y = 32.0;
  bool occlusion_heavy = true;
  std::size_t min_gts = 3;
  std::size_t max_gts = 12;

  // sensors
  std::size_t views = 4;
  std::size_t map_height = 64;
  std::size_t map_width = 64;
  double camera_height = 20.0;
  double focal = 68.0;
  double blob_sigma = 3.0;

  // training
  std::uint64_t seed = 1;
  std::size_t train_steps = 2000;
  std::size_t batch_size = 4;
  double learning_rate = 0.01;
  double momentum = 0.9;
  bool cosine_decay = true;  // learning rate follows a half cosine to 0 over train_steps
  double grad_clip = 10.0;  // global L2 norm; 0 disables
  std::size_t log_every = 50;

  // evaluation
  std::uint64_t eval_seed = 999;
  std::size_t eval_scenes = 200;
  double bev_resolution = 0.4;  // baseline feature-map resolution, m/px

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Throws ConfigError naming the line for unknown keys, malformed values, a
/// missing or unsupported version, or failed validation.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Text that parse_config reads back to an equal config.
std::string to_text(const ExperimentConfig& cfg);

/// Applies one "key = value" assignment (used for CLI overrides).
void set_option(ExperimentConfig& cfg, const std::string& key, const std::string& value);

}  // namespace anchorfuse::sim
