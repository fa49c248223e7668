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

// Confidence gating, the anchor message wire format, receiver-side encoding
// and envelope-based fusion, plus bandwidth accounting.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "anchorfuse/geometry/geometry.hpp"
#include "anchorfuse/numeric/params.hpp"
#include "anchorfuse/numeric/tape.hpp"

namespace anchorfuse::collab {

using geometry::AnchorBox;
using geometry::RigidTransform;
using numeric::Array;
using numeric::ParamStore;
using numeric::Tape;
using numeric::Var;

// --- confidence gating --------------------------------------------------

/// "<prefix>" MLP C -> C -> 1.
void add_confidence_params(ParamStore& store, const std::string& prefix, std::size_t channels);
/// Pre-sigmoid scores, [M, 1].
Var anchor_confidence_logits(Tape& tape, const ParamStore& store, const std::string& prefix, Var features);
/// Scores in [0, 1], one per row of `features`.
std::vector<double> anchor_confidence(const ParamStore& store, const std::string& prefix,
                                      const Array& features);

/// Indices of the k highest scores, best first; equal scores keep the lower
/// index first. Throws std::out_of_range unless 1 <= k <= scores.size().
std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k);
/// 1 where score >= tau.
std::vector<std::uint8_t> confidence_mask(std::span<const double> scores, double tau);

// --- wire format ----------------------------------------------------------

inline constexpr std::size_t kMessageHeaderBytes = 16;

struct AnchorMessage {
  std::uint32_t sender = 0;
  std::uint16_t layer = 0;
  std::uint16_t channels = 0;
  std::vector<std::array<float, 8>> boxes;  // sender frame
  std::vector<float> confidences;
  std::vector<float> features;  // count × channels, row-major

  std::size_t count() const noexcept { return boxes.size(); }
  bool operator==(const AnchorMessage&) const = default;
};

/// Header plus count × (9 + channels) 32-bit floats.
constexpr std::size_t message_bytes(std::size_t count, std::size_t channels) {
  return kMessageHeaderBytes + count * (9 + channels) * 4;
}

/// Rows that survive top-k selection and the threshold mask, in message
/// order.
std::vector<std::size_t> message_rows(std::span<const double> scores, std::size_t k, double tau);

/// Top-k selection followed by the threshold mask; masked anchors are
/// dropped. Values are narrowed to 32-bit floats.
AnchorMessage build_message(std::uint32_t sender, std::uint16_t layer, const std::vector<AnchorBox>& anchors,
                            const Array& features, std::span<const double> scores, std::size_t k,
                            double tau);

std::vector<std::uint8_t> encode_message(const AnchorMessage& msg);
/// Throws CodecError (with the failing byte offset) on a bad magic, a
/// truncated buffer or trailing bytes.
AnchorMessage decode_message(std::span<const std::uint8_t> bytes);

// --- receiver side --------------------------------------------------------

/// Received anchors in the ego frame with their encoded features.
struct SelectedSet {
  std::vector<AnchorBox> anchors;
  Var features;  // [count, C]; undefined when empty

  bool empty() const noexcept { return anchors.empty(); }
};

/// "<prefix>.transform" MLP 12 -> C -> C and "<prefix>.anchor" MLP 8 -> C -> C.
void add_encoder_params(ParamStore& store, const std::string& prefix, std::size_t channels);

/// Scaling applied before the embedding MLPs: x, y and translations are
/// divided by the half detection range.
struct Normalizer {
  double half_x = 16.0;
  double half_y = 16.0;
};

/// Anchors of `msg` moved into the ego frame by `ego_from_sender`; features
/// gain MLP(transform) + MLP(ego-frame anchor).
///
/// `sent`, when defined, is the sender-side node the message features were
/// copied from ([count, C]). Gradients then flow back to the sender; with
/// `exact` its 64-bit values are used instead of the decoded floats.
SelectedSet anchor_encoder(Tape& tape, const ParamStore& store, const std::string& prefix,
                           const RigidTransform& ego_from_sender, const AnchorMessage& msg,
                           const Normalizer& norm, Var sent = {}, bool exact = false);

/// Concatenation of several encoded sets.
SelectedSet merge(Tape& tape, const std::vector<SelectedSet>& parts);

/// [M, K] with 1 where selected center k lies inside ego anchor m's AABB
/// envelope (closed on all three axes).
Array containment_matrix(const std::vector<AnchorBox>& ego, const std::vector<AnchorBox>& selected);

/// F_m += sum of selected features whose centers lie in envelope m.
Var laaf(Tape& tape, const std::vector<AnchorBox>& ego, Var features, const SelectedSet& sel);

// --- bandwidth --------------------------------------------------------------

struct BandwidthRecord {
  std::size_t agent = 0;
  std::size_t layer = 0;
  std::size_t anchors = 0;
  std::size_t bytes = 0;
};

/// Bytes to ship a dense BEV feature map of the given range and resolution.
double feature_map_bytes(double range_x, double range_y, double resolution, std::size_t channels);

struct BandwidthReport {
  std::vector<BandwidthRecord> records;
  double baseline_bytes = 0;  // per agent per fused layer
  std::size_t total_bytes = 0;
  /// Mean anchor-message bytes per (agent, layer) over the baseline.
  double ratio = 0;
};

BandwidthReport bandwidth_report(std::vector<BandwidthRecord> records, double range_x, double range_y,
                                 double resolution, std::size_t channels);

}  // namespace anchorfuse::collab
