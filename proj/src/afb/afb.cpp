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

#include "anchorfuse/afb/afb.hpp"

#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/compose.hpp"

namespace anchorfuse::afb {

using namespace numeric;

namespace {

constexpr std::size_t kFixedPoints = 9;  // center + 8 corners

// Box-local unit offsets of the center and the corners, in corner_points order.
std::vector<double> fixed_offsets() {
  std::vector<double> out(3, 0.0);
  for (int i = 0; i < 8; ++i) {
    out.push_back((i & 4) ? 0.5 : -0.5);
    out.push_back((i & 2) ? 0.5 : -0.5);
    out.push_back((i & 1) ? 0.5 : -0.5);
  }
  return out;
}

}  // namespace

std::size_t ViewFeatureStack::channels() const { return maps.empty() ? 0 : maps.front().last_dim(); }

void add_camera_weight_params(ParamStore& store, const std::string& prefix) {
  store.add_mlp(prefix, {16, 16, 1});
}

void add_afb_params(ParamStore& store, const std::string& prefix, std::size_t channels,
                    std::size_t learnable_points) {
  store.add_mlp(prefix + ".offset", {channels, 3 * learnable_points});
  const std::size_t pool = kFixedPoints + learnable_points;
  store.add(prefix + ".point_weight", Array({pool, 1}, 1.0 / static_cast<double>(pool)));
  store.add_mlp(prefix + ".out", {channels, channels});
}

Array camera_encoding(const std::vector<CameraModel>& cams) {
  std::vector<double> data;
  data.reserve(cams.size() * 16);
  for (const auto& cam : cams) {
    auto f = cam.flat();
    const double w = static_cast<double>(cam.width()), h = static_cast<double>(cam.height());
    f[0] /= w;
    f[1] /= h;
    f[2] /= w;
    f[3] /= h;
    for (std::size_t r = 0; r < 3; ++r) f[4 + r * 4 + 3] /= 10.0;
    data.insert(data.end(), f.begin(), f.end());
  }
  return Array({cams.size(), 16}, std::move(data));
}

Var camera_weights(Tape& tape, const ParamStore& store, const std::string& prefix,
                   const std::vector<CameraModel>& cams) {
  return mlp_forward(tape, store, prefix, tape.constant(camera_encoding(cams)), Activation::kSigmoid);
}

Array camera_weights(const ParamStore& store, const std::string& prefix,
                     const std::vector<CameraModel>& cams) {
  return mlp_forward(store, prefix, camera_encoding(cams), Activation::kSigmoid);
}

Var learnable_offsets(Tape& tape, const ParamStore& store, const std::string& prefix, Var features) {
  return add_scalar(mlp_forward(tape, store, prefix + ".offset", features, Activation::kSigmoid), -0.5);
}

std::vector<geometry::Vec3> learnable_points(const AnchorBox& anchor, const Array& feature,
                                             const ParamStore& store, const std::string& prefix) {
  Tape tape;
  Var f = tape.constant(feature.reshaped({1, feature.size()}));
  const Array& o = learnable_offsets(tape, store, prefix, f).value();
  std::vector<geometry::Vec3> out;
  for (std::size_t i = 0; i + 2 < o.size(); i += 3) {
    out.push_back(geometry::box_point(anchor, geometry::Vec3(o[i], o[i + 1], o[i + 2])));
  }
  return out;
}

Var point_pool(Tape& tape, const std::vector<AnchorBox>& anchors, Var offsets) {
  const std::size_t m = anchors.size();
  const Array& ov = offsets.value();
  if (ov.rank() != 2 || ov.dim(0) != m || ov.dim(1) % 3 != 0) {
    throw DimensionError("point_pool: offsets " + shape_str(ov.shape()) + " for " + std::to_string(m) +
                         " anchors");
  }
  const std::size_t pool = kFixedPoints + ov.dim(1) / 3;
  const std::size_t rows = m * pool;

  const auto fixed = fixed_offsets();
  std::vector<double> fixed_rows;
  fixed_rows.reserve(m * fixed.size());
  for (std::size_t a = 0; a < m; ++a) fixed_rows.insert(fixed_rows.end(), fixed.begin(), fixed.end());
  Var local = reshape(concat({tape.constant(Array({m, fixed.size()}, std::move(fixed_rows))), offsets}, 1),
                      {rows, 3});

  // Row r of each coefficient array maps a local offset to one world axis.
  Array cx({rows, 3}), cy({rows, 3}), cz({rows, 3}), centers({rows, 3});
  for (std::size_t a = 0; a < m; ++a) {
    const AnchorBox& b = anchors[a];
    for (std::size_t p = 0; p < pool; ++p) {
      const std::size_t r = a * pool + p;
      cx.at(r, 0) = b.cos_theta * b.l;
      cx.at(r, 1) = -b.sin_theta * b.w;
      cy.at(r, 0) = b.sin_theta * b.l;
      cy.at(r, 1) = b.cos_theta * b.w;
      cz.at(r, 2) = b.h;
      centers.at(r, 0) = b.x;
      centers.at(r, 1) = b.y;
      centers.at(r, 2) = b.z;
    }
  }
  Var px = sum(mul(local, tape.constant(std::move(cx))), 1);
  Var py = sum(mul(local, tape.constant(std::move(cy))), 1);
  Var pz = sum(mul(local, tape.constant(std::move(cz))), 1);
  return add(concat({px, py, pz}, 1), tape.constant(std::move(centers)));
}

Projected project_points(Tape& tape, const CameraModel& cam, Var points) {
  const std::size_t n = points.value().dim(0);
  Var hom = concat({points, tape.constant(Array({n, 1}, 1.0))}, 1);
  Array proj_t({4, 3});
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) proj_t.at(c, r) = cam.projection()(static_cast<long>(r), static_cast<long>(c));
  }
  Var h = matmul(hom, tape.constant(std::move(proj_t)));
  const Array& hv = h.value();
  Array mask({n, 1}), fill({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const double z = hv.at(i, 2);
    bool ok = z > geometry::kMinDepth;
    if (ok) {
      const double u = hv.at(i, 0) / z, v = hv.at(i, 1) / z;
      ok = u >= 0 && u < static_cast<double>(cam.width()) && v >= 0 && v < static_cast<double>(cam.height());
    }
    mask[i] = ok ? 1.0 : 0.0;
    fill[i] = ok ? 0.0 : 1.0;
  }
  Var depth = add(mul(slice_cols(h, 2, 3), tape.constant(mask)), tape.constant(std::move(fill)));
  Var uv = mul(slice_cols(h, 0, 2), reciprocal(depth));
  return {uv, std::move(mask)};
}

Var anchor_featuring(Tape& tape, const ParamStore& store, const std::string& prefix,
                     const std::string& camera_prefix, const std::vector<AnchorBox>& anchors,
                     Var features, const std::vector<Var>& maps,
                     const std::vector<CameraModel>& cams) {
  if (maps.size() != cams.size()) throw DimensionError("anchor_featuring: one map per camera required");
  const std::size_t m = anchors.size();
  const std::size_t channels = features.value().dim(1);
  for (const Var& map : maps) {
    if (map.value().rank() != 3 || map.value().dim(2) != channels) {
      throw DimensionError("anchor_featuring: map " + shape_str(map.shape()) + " vs query width " +
                           std::to_string(channels));
    }
  }
  Var offsets = learnable_offsets(tape, store, prefix, features);
  Var points = point_pool(tape, anchors, offsets);
  const std::size_t pool = points.value().dim(0) / (m == 0 ? 1 : m);
  Var point_weight = tape.param(store, prefix + ".point_weight");
  if (point_weight.value().dim(0) != pool) throw DimensionError("anchor_featuring: point weight count");
  Var view_weight = camera_weights(tape, store, camera_prefix, cams);

  Var agg = tape.constant(Array({m, channels}));
  for (std::size_t v = 0; v < cams.size(); ++v) {
    Projected proj = project_points(tape, cams[v], points);
    Var samples = mul(bilinear_sample(maps[v], proj.uv), tape.constant(std::move(proj.mask)));
    Var pooled = sum(mul(reshape(samples, {m, pool, channels}), point_weight), 1);
    Var wv = gather(view_weight, {v}, {1});
    agg = add(agg, mul(reshape(pooled, {m, channels}), wv));
  }
  return mlp_forward(tape, store, prefix + ".out", agg);
}

Array anchor_featuring(const ParamStore& store, const std::string& prefix,
                       const std::string& camera_prefix, const QuerySet& qs,
                       const ViewFeatureStack& views) {
  Tape tape;
  std::vector<Var> maps;
  for (const auto& m : views.maps) maps.push_back(tape.constant(m));
  return anchor_featuring(tape, store, prefix, camera_prefix, qs.anchors, tape.constant(qs.features), maps,
                          views.cameras)
      .value();
}

}  // namespace anchorfuse::afb
