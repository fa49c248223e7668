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

#include "anchorfuse/collab/collab.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/compose.hpp"

namespace anchorfuse::collab {

using namespace numeric;

void add_confidence_params(ParamStore& store, const std::string& prefix, std::size_t channels) {
  store.add_mlp(prefix, {channels, channels, 1});
}

Var anchor_confidence_logits(Tape& tape, const ParamStore& store, const std::string& prefix, Var features) {
  return mlp_forward(tape, store, prefix, features);
}

std::vector<double> anchor_confidence(const ParamStore& store, const std::string& prefix,
                                      const Array& features) {
  return mlp_forward(store, prefix, features, Activation::kSigmoid).vec();
}

std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) {
    throw std::out_of_range("select_topk: K=" + std::to_string(k) + " outside [1, " +
                            std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  return order;
}

std::vector<std::uint8_t> confidence_mask(std::span<const double> scores, double tau) {
  std::vector<std::uint8_t> mask(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) mask[i] = scores[i] >= tau ? 1 : 0;
  return mask;
}

std::vector<std::size_t> message_rows(std::span<const double> scores, std::size_t k, double tau) {
  if (scores.empty()) return {};
  const auto top = select_topk(scores, std::min(k, scores.size()));
  std::vector<std::size_t> rows;
  for (std::size_t i : top) {
    if (scores[i] >= tau) rows.push_back(i);
  }
  return rows;
}

AnchorMessage build_message(std::uint32_t sender, std::uint16_t layer, const std::vector<AnchorBox>& anchors,
                            const Array& features, std::span<const double> scores, std::size_t k,
                            double tau) {
  if (features.rank() != 2 || features.dim(0) != anchors.size() || scores.size() != anchors.size()) {
    throw DimensionError("build_message: anchors, features and scores disagree");
  }
  AnchorMessage msg;
  msg.sender = sender;
  msg.layer = layer;
  msg.channels = static_cast<std::uint16_t>(features.dim(1));
  const std::size_t c = features.dim(1);
  for (std::size_t i : message_rows(scores, k, tau)) {
    std::array<float, 8> box{};
    const auto p = anchors[i].params();
    for (std::size_t q = 0; q < 8; ++q) box[q] = static_cast<float>(p[q]);
    msg.boxes.push_back(box);
    msg.confidences.push_back(static_cast<float>(scores[i]));
    for (std::size_t q = 0; q < c; ++q) msg.features.push_back(static_cast<float>(features.at(i, q)));
  }
  return msg;
}

namespace {

void put(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t width) {
  for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint64_t get(std::span<const std::uint8_t> in, std::size_t offset, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_message(const AnchorMessage& msg) {
  const std::size_t n = msg.count();
  if (msg.confidences.size() != n || msg.features.size() != n * msg.channels) {
    throw DimensionError("encode_message: inconsistent record arrays");
  }
  if (n > 0xffff) throw DimensionError("encode_message: too many anchors for a u16 count");
  std::vector<std::uint8_t> out;
  out.reserve(message_bytes(n, msg.channels));
  out.insert(out.end(), {'A', 'C', 'M', '1'});
  put(out, msg.sender, 4);
  put(out, msg.layer, 2);
  put(out, n, 2);
  put(out, msg.channels, 2);
  put(out, 0, 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (float f : msg.boxes[i]) put(out, std::bit_cast<std::uint32_t>(f), 4);
    put(out, std::bit_cast<std::uint32_t>(msg.confidences[i]), 4);
    for (std::size_t q = 0; q < msg.channels; ++q) {
      put(out, std::bit_cast<std::uint32_t>(msg.features[i * msg.channels + q]), 4);
    }
  }
  return out;
}

AnchorMessage decode_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMessageHeaderBytes) {
    throw CodecError("message shorter than its " + std::to_string(kMessageHeaderBytes) + "-byte header",
                     bytes.size());
  }
  if (std::memcmp(bytes.data(), "ACM1", 4) != 0) throw CodecError("bad message magic", 0);
  AnchorMessage msg;
  msg.sender = static_cast<std::uint32_t>(get(bytes, 4, 4));
  msg.layer = static_cast<std::uint16_t>(get(bytes, 8, 2));
  const std::size_t n = get(bytes, 10, 2);
  msg.channels = static_cast<std::uint16_t>(get(bytes, 12, 2));
  if (get(bytes, 14, 2) != 0) throw CodecError("nonzero reserved header bytes", 14);
  const std::size_t expected = message_bytes(n, msg.channels);
  if (bytes.size() < expected) {
    const std::size_t record = (9 + msg.channels) * 4;
    const std::size_t complete = (bytes.size() - kMessageHeaderBytes) / record;
    throw CodecError("message truncated: " + std::to_string(n) + " records announced, " +
                         std::to_string(complete) + " complete",
                     kMessageHeaderBytes + complete * record);
  }
  if (bytes.size() > expected) throw CodecError("trailing bytes after last record", expected);
  std::size_t offset = kMessageHeaderBytes;
  auto next_float = [&] {
    const float f = std::bit_cast<float>(static_cast<std::uint32_t>(get(bytes, offset, 4)));
    offset += 4;
    return f;
  };
  msg.boxes.resize(n);
  msg.confidences.resize(n);
  msg.features.resize(n * msg.channels);
  for (std::size_t i = 0; i < n; ++i) {
    for (float& f : msg.boxes[i]) f = next_float();
    msg.confidences[i] = next_float();
    for (std::size_t q = 0; q < msg.channels; ++q) msg.features[i * msg.channels + q] = next_float();
  }
  return msg;
}

void add_encoder_params(ParamStore& store, const std::string& prefix, std::size_t channels) {
  store.add_mlp(prefix + ".transform", {12, channels, channels});
  store.add_mlp(prefix + ".anchor", {8, channels, channels});
}

SelectedSet anchor_encoder(Tape& tape, const ParamStore& store, const std::string& prefix,
                           const RigidTransform& ego_from_sender, const AnchorMessage& msg,
                           const Normalizer& norm, Var sent, bool exact) {
  SelectedSet out;
  const std::size_t n = msg.count(), c = msg.channels;
  if (n == 0) return out;
  for (const auto& b : msg.boxes) {
    const std::array<double, 8> p = {b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]};
    out.anchors.push_back(geometry::transform_anchor(ego_from_sender, AnchorBox::from_params(p)));
  }
  auto flat = ego_from_sender.flat();
  flat[3] /= norm.half_x;
  flat[7] /= norm.half_y;
  flat[11] /= norm.half_x;
  Var t_embed = mlp_forward(tape, store, prefix + ".transform",
                            tape.constant(Array({1, 12}, std::vector<double>(flat.begin(), flat.end()))));
  Var a_embed = mlp_forward(tape, store, prefix + ".anchor",
                            tape.constant(geometry::normalized_boxes(out.anchors, norm.half_x, norm.half_y)));
  Array decoded({n, c}, std::vector<double>(msg.features.begin(), msg.features.end()));
  Var received;
  if (!sent.defined()) {
    received = tape.constant(std::move(decoded));
  } else if (exact) {
    if (sent.shape() != decoded.shape()) throw DimensionError("anchor_encoder: sender rows disagree with message");
    received = sent;
  } else {
    received = straight_through(sent, std::move(decoded));
  }
  out.features = add(add(received, t_embed), a_embed);
  return out;
}

SelectedSet merge(Tape& tape, const std::vector<SelectedSet>& parts) {
  SelectedSet out;
  std::vector<Var> feats;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    out.anchors.insert(out.anchors.end(), p.anchors.begin(), p.anchors.end());
    feats.push_back(p.features);
  }
  if (feats.size() == 1) {
    out.features = feats.front();
  } else if (!feats.empty()) {
    out.features = concat(feats, 0);
  }
  (void)tape;
  return out;
}

Array containment_matrix(const std::vector<AnchorBox>& ego, const std::vector<AnchorBox>& selected) {
  Array inside({ego.size(), selected.size()});
  for (std::size_t m = 0; m < ego.size(); ++m) {
    const auto [lo, hi] = geometry::aabb_envelope(ego[m]);
    for (std::size_t k = 0; k < selected.size(); ++k) {
      const auto& s = selected[k];
      const bool in = s.x >= lo.x() && s.x <= hi.x() && s.y >= lo.y() && s.y <= hi.y() && s.z >= lo.z() &&
                      s.z <= hi.z();
      inside.at(m, k) = in ? 1.0 : 0.0;
    }
  }
  return inside;
}

Var laaf(Tape& tape, const std::vector<AnchorBox>& ego, Var features, const SelectedSet& sel) {
  if (sel.empty()) return features;
  return add(features, matmul(tape.constant(containment_matrix(ego, sel.anchors)), sel.features));
}

double feature_map_bytes(double range_x, double range_y, double resolution, std::size_t channels) {
  // Cell counts are integers; rounding absorbs binary representation error
  // (153.6 / 0.4 is not exactly 384 in doubles).
  return std::round(range_x / resolution) * std::round(range_y / resolution) * static_cast<double>(channels) * 4.0;
}

BandwidthReport bandwidth_report(std::vector<BandwidthRecord> records, double range_x, double range_y,
                                 double resolution, std::size_t channels) {
  BandwidthReport report;
  report.records = std::move(records);
  report.baseline_bytes = feature_map_bytes(range_x, range_y, resolution, channels);
  for (const auto& r : report.records) report.total_bytes += r.bytes;
  if (!report.records.empty()) {
    report.ratio = static_cast<double>(report.total_bytes) / static_cast<double>(report.records.size()) /
                   report.baseline_bytes;
  }
  return report;
}

}  // namespace anchorfuse::collab
