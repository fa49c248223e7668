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

#include <iosfwd>
#include <string>
#include <vector>

#include "anchorfuse/geometry/geometry.hpp"
#include "anchorfuse/numeric/params.hpp"
#include "anchorfuse/numeric/tape.hpp"

namespace anchorfuse::detector {

using geometry::AnchorBox;
using numeric::Array;
using numeric::ParamStore;
using numeric::Tape;
using numeric::Var;

struct LossWeights {
  double cls = 2.0;
  double reg = 0.25;
  double alpha = 0.25;
  double gamma = 2.0;
};

/// "<prefix>.cls" MLP C -> C -> 1 and "<prefix>.reg" MLP (C + 8) -> 2C -> 8.
void add_head_params(ParamStore& store, const std::string& prefix, std::size_t channels);

struct HeadOutput {
  Var boxes;   // [M, 8], residual on the input anchors, (sin, cos) renormalized
  Var logits;  // [M, 1]
};

/// The regression MLP sees the query feature together with the normalized
/// anchor and predicts a delta that is added to the anchor.
HeadOutput decode_heads(Tape& tape, const ParamStore& store, const std::string& prefix,
                        const std::vector<AnchorBox>& anchors, Var features, double half_x, double half_y);

struct Prediction {
  AnchorBox box;
  double logit = 0;
  std::size_t layer = 0;
};

std::vector<Prediction> predictions(const HeadOutput& out, std::size_t layer, double min_size = 0.2);

/// Next-layer anchors: predicted boxes with sizes clamped to `min_size` and
/// (sin, cos) renormalized.
std::vector<AnchorBox> refine_anchors(const Array& boxes, double min_size = 0.2);

struct Assignment {
  std::vector<std::size_t> pred_of_gt;  // gt index -> prediction index
  double cost = 0;
};

/// Exact minimum-cost assignment of every row to a distinct column of a
/// [rows, cols] matrix with rows <= cols. Throws InfeasibleError otherwise.
Assignment solve_assignment(const Array& cost);

/// focal(target = 1) - focal(target = 0) for a logit.
double focal_cost(double logit, const LossWeights& w);
/// [G, M] matching cost.
Array matching_cost(const Array& pred_boxes, const Array& logits, const std::vector<AnchorBox>& gts,
                    const LossWeights& w);
Assignment hungarian_match(const Array& pred_boxes, const Array& logits, const std::vector<AnchorBox>& gts,
                           const LossWeights& w);

/// Sum of elementwise sigmoid focal losses against 0/1 targets.
Var focal_loss(Var logits, const Array& targets, const LossWeights& w);

/// w.cls · focal over all predictions + w.reg · L1 over matched boxes, divided
/// by `normalizer`.
Var set_loss(Tape& tape, const HeadOutput& out, const std::vector<AnchorBox>& gts,
             const Assignment& assignment, const LossWeights& w, double normalizer = 1.0);

struct ScoredBox {
  std::size_t scene = 0;
  double confidence = 0;
  AnchorBox box;
};

/// 11-point interpolated AP per threshold. Predictions are ranked by
/// confidence (ties keep input order) and greedily matched to the unused gt
/// of highest BEV IoU in the same scene.
std::vector<double> evaluate_ap(const std::vector<ScoredBox>& preds,
                                const std::vector<std::vector<AnchorBox>>& gts,
                                const std::vector<double>& thresholds = {0.3, 0.5, 0.7});

struct DetectionRecord {
  std::size_t scene = 0;
  std::size_t agent = 0;
  AnchorBox box;
  double confidence = 0;
};

/// One whitespace-separated line per record:
/// scene agent x y z h w l sin cos confidence
void write_detections(std::ostream& out, const std::vector<DetectionRecord>& records);
std::vector<DetectionRecord> read_detections(std::istream& in);

}  // namespace anchorfuse::detector
