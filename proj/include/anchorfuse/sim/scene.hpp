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

// Synthetic road-strip scenes and their rendered feature maps.

#pragma once

#include <cstdint>
#include <vector>

#include "anchorfuse/afb/afb.hpp"
#include "anchorfuse/geometry/geometry.hpp"
#include "anchorfuse/sim/config.hpp"

namespace anchorfuse::sim {

using geometry::AnchorBox;
using geometry::RigidTransform;

struct Scene {
  std::vector<RigidTransform> poses;                     // world <- agent
  std::vector<std::vector<RigidTransform>> transforms;   // [i][j]: agent i <- agent j
  std::vector<AnchorBox> gts;                            // world frame
  std::vector<std::vector<std::uint8_t>> visible;        // [agent][gt]

  std::size_t agents() const noexcept { return poses.size(); }
  /// Throws std::logic_error if an invariant does not hold.
  void check() const;
};

/// Throws ConfigError when the layout cannot be built: fewer than 12 m of
/// range on either axis, or agents spaced so far apart that the farthest
/// one would sit beyond the ego range.
Scene generate_scene(const ExperimentConfig& cfg, std::uint64_t seed);

/// Whether the BEV segment a -> b passes through the box's rectangle.
bool segment_hits_box(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const AnchorBox& box);

/// Ground truths in the agent's frame that fall inside its detection range,
/// occluded ones included.
std::vector<AnchorBox> agent_ground_truth(const Scene& scene, std::size_t agent, const ExperimentConfig& cfg);
/// Same selection, flagged by visibility to that agent.
std::vector<std::uint8_t> agent_ground_truth_visibility(const Scene& scene, std::size_t agent,
                                                        const ExperimentConfig& cfg);

/// Four elevated cameras (or cfg.views of them) around the agent's roof.
std::vector<geometry::CameraModel> camera_rig(const ExperimentConfig& cfg);

/// Fixed per-channel code of a box as seen from an agent frame: depends on
/// its heading and size only.
std::vector<double> signature(const AnchorBox& agent_frame_box, std::size_t channels);

/// Zero maps plus one Gaussian blob per visible gt at its center's
/// projection, weighted by the gt's signature. Channels 2 and 3 instead carry
/// the blob weight times the ground offset (x, y, agent frame, per 2 m) of the
/// pixel's ray from the gt center at the center's height.
afb::ViewFeatureStack render_feature_maps(const Scene& scene, std::size_t agent, const ExperimentConfig& cfg);

}  // namespace anchorfuse::sim
