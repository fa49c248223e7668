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

// Anchor featuring: sample multi-view image features at each anchor's point
// pool and aggregate them into one feature vector per anchor.

#pragma once

#include <string>
#include <vector>

#include "anchorfuse/geometry/geometry.hpp"
#include "anchorfuse/numeric/params.hpp"
#include "anchorfuse/numeric/tape.hpp"

namespace anchorfuse::afb {

using geometry::AnchorBox;
using geometry::CameraModel;
using numeric::Array;
using numeric::ParamStore;
using numeric::Tape;
using numeric::Var;

struct QuerySet {
  std::vector<AnchorBox> anchors;
  Array features;  // [M, C]
};

struct ViewFeatureStack {
  std::vector<Array> maps;  // each [H, W, C]
  std::vector<CameraModel> cameras;

  std::size_t channels() const;
};

/// Parameters shared by every layer: "<prefix>" MLP 16 -> 16 -> 1.
void add_camera_weight_params(ParamStore& store, const std::string& prefix);
/// Per-layer parameters: "<prefix>.offset" (C -> 3·points), "<prefix>.point_weight"
/// [9 + points, 1], "<prefix>.out" (C -> C).
void add_afb_params(ParamStore& store, const std::string& prefix, std::size_t channels,
                    std::size_t learnable_points);

/// Camera parameters as fed to the weight MLP: intrinsics divided by the
/// image extents, rotation entries as-is, translation in units of 10 m.
Array camera_encoding(const std::vector<CameraModel>& cams);

/// [views, 1] weights in (0, 1).
Var camera_weights(Tape& tape, const ParamStore& store, const std::string& prefix,
                   const std::vector<CameraModel>& cams);
Array camera_weights(const ParamStore& store, const std::string& prefix,
                     const std::vector<CameraModel>& cams);

/// Box-local offsets sigmoid(linear(F)) - 0.5, [M, 3·points].
Var learnable_offsets(Tape& tape, const ParamStore& store, const std::string& prefix, Var features);

/// Agent-frame learnable points of one anchor given its feature row.
std::vector<geometry::Vec3> learnable_points(const AnchorBox& anchor, const Array& feature,
                                             const ParamStore& store, const std::string& prefix);

/// Agent-frame pool coordinates for every anchor, [M·(9 + points), 3],
/// anchor-major. Differentiable in the learnable offsets.
Var point_pool(Tape& tape, const std::vector<AnchorBox>& anchors, Var offsets);

/// Pixel coordinates of `points` in `cam` plus a [P, 1] validity mask. Rows
/// with a zero mask hold placeholder coordinates.
struct Projected {
  Var uv;      // [P, 2]
  Array mask;  // [P, 1]
};
Projected project_points(Tape& tape, const CameraModel& cam, Var points);

/// Sum over views and pool points of weighted bilinear samples, followed by
/// the output projection. `maps` holds one [H, W, C] node per camera.
/// Throws DimensionError when the maps' C differs from the query width.
Var anchor_featuring(Tape& tape, const ParamStore& store, const std::string& prefix,
                     const std::string& camera_prefix, const std::vector<AnchorBox>& anchors,
                     Var features, const std::vector<Var>& maps,
                     const std::vector<CameraModel>& cams);

/// Untraced convenience form.
Array anchor_featuring(const ParamStore& store, const std::string& prefix,
                       const std::string& camera_prefix, const QuerySet& qs,
                       const ViewFeatureStack& views);

}  // namespace anchorfuse::afb
