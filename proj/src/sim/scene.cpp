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

#include "anchorfuse/sim/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/rng.hpp"

namespace anchorfuse::sim {

using geometry::Vec3;
using numeric::Array;
using numeric::Rng;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLaneOffset = 1.75;
constexpr double kMinGtSpacing = 5.0;
constexpr double kMinAgentClearance = 4.0;
constexpr double kCarHeight = 1.5;
constexpr double kCarZ = 0.75;

AnchorBox random_car(Rng& rng, double x, double y, double yaw) {
  const double w = rng.uniform(1.7, 2.0);
  const double l = rng.uniform(3.9, 4.6);
  return AnchorBox::from_yaw(x, y, kCarZ, kCarHeight, w, l, yaw);
}

double cross2(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

bool segments_cross(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2, const Eigen::Vector2d& q1,
                    const Eigen::Vector2d& q2) {
  const double d1 = cross2(q1, q2, p1), d2 = cross2(q1, q2, p2);
  const double d3 = cross2(p1, p2, q1), d4 = cross2(p1, p2, q2);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

bool inside_rect(const Eigen::Vector2d& p, const std::array<Eigen::Vector2d, 4>& c) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (cross2(c[i], c[(i + 1) % 4], p) < 0) return false;
  }
  return true;
}

}  // namespace

bool segment_hits_box(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const AnchorBox& box) {
  const auto c = geometry::bev_corners(box);
  if (inside_rect(a, c) || inside_rect(b, c)) return true;
  for (std::size_t i = 0; i < 4; ++i) {
    if (segments_cross(a, b, c[i], c[(i + 1) % 4])) return true;
  }
  return false;
}

void Scene::check() const {
  const std::size_t n = poses.size();
  if (transforms.size() != n || visible.size() != n) throw std::logic_error("scene: per-agent arrays disagree");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto round = transforms[i][j].compose(transforms[j][i]).matrix();
      if ((round - RigidTransform::Matrix34::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
        throw std::logic_error("scene: pairwise transforms are not mutually inverse");
      }
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    bool seen = false;
    for (std::size_t a = 0; a < n; ++a) seen = seen || visible[a].at(g);
    if (!seen) throw std::logic_error("scene: a ground truth is visible to no agent");
  }
}

Scene generate_scene(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.range_x < 12.0 || cfg.range_y < 12.0) {
    throw ConfigError("detection range must be at least 12 m on both axes to place objects");
  }
  const std::size_t far_slot = cfg.agents / 2;  // neighbors alternate sides, 10-18 m per slot
  if (10.0 * static_cast<double>(far_slot) > cfg.range_x) {
    throw ConfigError(std::to_string(cfg.agents) + " agents do not fit a " + std::to_string(cfg.range_x) +
                      " m range: the farthest would sit outside it");
  }
  Rng rng(seed);
  Scene scene;
  scene.poses.push_back(RigidTransform::from_yaw(0.0, Vec3(0.0, -kLaneOffset, 0.0)));
  for (std::size_t i = 1; i < cfg.agents; ++i) {
    const double side = (i % 2) ? 1.0 : -1.0;
    const double x = rng.uniform(10.0, 18.0) * side * static_cast<double>((i + 1) / 2);
    const double y = kLaneOffset * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    const double yaw = (rng.bernoulli(0.5) ? 0.0 : kPi) + rng.uniform(-0.1, 0.1);
    scene.poses.push_back(RigidTransform::from_yaw(yaw, Vec3(x, y, 0.0)));
  }

  std::vector<AnchorBox> boxes;
  auto fits = [&](const AnchorBox& b) {
    for (const auto& o : boxes) {
      if (std::hypot(o.x - b.x, o.y - b.y) < kMinGtSpacing) return false;
    }
    for (const auto& p : scene.poses) {
      const Vec3 t = p.translation();
      if (std::hypot(t.x() - b.x, t.y() - b.y) < kMinAgentClearance) return false;
    }
    return true;
  };
  const double hx = cfg.range_x / 2.0, hy = cfg.range_y / 2.0;
  const std::size_t target = static_cast<std::size_t>(rng.integer(static_cast<int>(cfg.min_gts), static_cast<int>(cfg.max_gts)));

  if (cfg.occlusion_heavy && scene.poses.size() > 1) {
    // Occluders close to the ego, each with a target a few meters behind it,
    // on the side of some collaborator so that one of them can see it.
    const int occluders = rng.integer(2, 3);
    for (int o = 0; o < occluders && boxes.size() + 2 <= cfg.max_gts; ++o) {
      for (int attempt = 0; attempt < 50; ++attempt) {
        const std::size_t helper = 1 + static_cast<std::size_t>(rng.integer(0, static_cast<int>(scene.poses.size()) - 2));
        const Vec3 h = scene.poses[helper].translation();
        const double toward = std::atan2(h.y() + kLaneOffset, h.x());
        const double ang = toward + rng.uniform(-1.2, 1.2);
        const double d = rng.uniform(4.5, 7.0);
        const double yaw = ang + kPi / 2 + rng.uniform(-0.3, 0.3);
        const AnchorBox occ = random_car(rng, d * std::cos(ang), -kLaneOffset + d * std::sin(ang), yaw);
        if (!fits(occ)) continue;
        const double d2 = d + rng.uniform(5.0, 9.0);
        const double a2 = ang + rng.uniform(-0.08, 0.08);
        const AnchorBox hidden =
            random_car(rng, d2 * std::cos(a2), -kLaneOffset + d2 * std::sin(a2), rng.uniform(-kPi, kPi));
        boxes.push_back(occ);
        if (std::abs(hidden.x) < hx - 1 && std::abs(hidden.y + kLaneOffset) < hy - 1 && fits(hidden)) {
          boxes.push_back(hidden);
        }
        break;
      }
    }
  }
  for (int attempt = 0; boxes.size() < target && attempt < 2000; ++attempt) {
    const double x = rng.uniform(-hx + 1, hx - 1);
    const double y = rng.uniform(-hy + 1, hy - 1) - kLaneOffset;
    const AnchorBox b = random_car(rng, x, y, rng.uniform(-kPi, kPi));
    if (fits(b)) boxes.push_back(b);
  }

  const std::size_t n = scene.poses.size();
  std::vector<std::vector<std::uint8_t>> vis(n, std::vector<std::uint8_t>(boxes.size(), 0));
  for (std::size_t a = 0; a < n; ++a) {
    const Eigen::Vector2d from = scene.poses[a].translation().head<2>();
    for (std::size_t g = 0; g < boxes.size(); ++g) {
      const Eigen::Vector2d to(boxes[g].x, boxes[g].y);
      bool blocked = false;
      for (std::size_t o = 0; o < boxes.size() && !blocked; ++o) {
        if (o != g) blocked = segment_hits_box(from, to, boxes[o]);
      }
      // Sensors cover the detection range only.
      const AnchorBox local = geometry::transform_anchor(scene.poses[a].inverse(), boxes[g]);
      const bool covered = std::abs(local.x) <= hx && std::abs(local.y) <= hy;
      vis[a][g] = (blocked || !covered) ? 0 : 1;
    }
  }
  scene.visible.assign(n, {});
  for (std::size_t g = 0; g < boxes.size(); ++g) {
    bool seen = false;
    for (std::size_t a = 0; a < n; ++a) seen = seen || vis[a][g];
    if (!seen) continue;
    scene.gts.push_back(boxes[g]);
    for (std::size_t a = 0; a < n; ++a) scene.visible[a].push_back(vis[a][g]);
  }
  scene.transforms.assign(n, std::vector<RigidTransform>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const RigidTransform inv = scene.poses[i].inverse();
    for (std::size_t j = 0; j < n; ++j) scene.transforms[i][j] = inv.compose(scene.poses[j]);
  }
  scene.check();
  return scene;
}

namespace {

std::vector<std::size_t> in_range(const Scene& scene, std::size_t agent, const ExperimentConfig& cfg,
                                  std::vector<AnchorBox>* boxes) {
  const RigidTransform to_agent = scene.poses.at(agent).inverse();
  std::vector<std::size_t> idx;
  for (std::size_t g = 0; g < scene.gts.size(); ++g) {
    const AnchorBox b = geometry::transform_anchor(to_agent, scene.gts[g]);
    if (std::abs(b.x) <= cfg.range_x / 2 && std::abs(b.y) <= cfg.range_y / 2) {
      idx.push_back(g);
      if (boxes) boxes->push_back(b);
    }
  }
  return idx;
}

}  // namespace

std::vector<AnchorBox> agent_ground_truth(const Scene& scene, std::size_t agent, const ExperimentConfig& cfg) {
  std::vector<AnchorBox> out;
  in_range(scene, agent, cfg, &out);
  return out;
}

std::vector<std::uint8_t> agent_ground_truth_visibility(const Scene& scene, std::size_t agent,
                                                        const ExperimentConfig& cfg) {
  std::vector<std::uint8_t> out;
  for (std::size_t g : in_range(scene, agent, cfg, nullptr)) out.push_back(scene.visible[agent][g]);
  return out;
}

std::vector<geometry::CameraModel> camera_rig(const ExperimentConfig& cfg) {
  std::vector<geometry::CameraModel> cams;
  const double dq = std::hypot(cfg.range_x / 4, cfg.range_y / 4);
  const double pitch = std::atan2(cfg.camera_height, dq);
  const Vec3 position(0.0, 0.0, cfg.camera_height);
  for (std::size_t k = 0; k < cfg.views; ++k) {
    const double psi = kPi / 4 + static_cast<double>(k) * 2 * kPi / static_cast<double>(cfg.views);
    const Vec3 forward(std::cos(pitch) * std::cos(psi), std::cos(pitch) * std::sin(psi), -std::sin(pitch));
    const Vec3 right(std::sin(psi), -std::cos(psi), 0.0);
    const Vec3 down = forward.cross(right);
    Eigen::Matrix3d r;
    r.row(0) = right;
    r.row(1) = down;
    r.row(2) = forward;
    RigidTransform::Matrix34 m;
    m.leftCols<3>() = r;
    m.col(3) = -r * position;
    const geometry::Intrinsics k_mat{cfg.focal, cfg.focal, static_cast<double>(cfg.map_width) / 2,
                                     static_cast<double>(cfg.map_height) / 2};
    cams.emplace_back(k_mat, RigidTransform(m), cfg.map_height, cfg.map_width);
  }
  return cams;
}

namespace {
constexpr std::size_t kPartChannels = 4;
constexpr double kPartScale = 2.0;  // meters per unit of part code
}  // namespace

std::vector<double> signature(const AnchorBox& b, std::size_t channels) {
  // Fixed random basis, identical in every run.
  constexpr std::size_t kTerms = 5;
  static thread_local std::vector<double> basis;
  static thread_local std::size_t basis_channels = 0;
  if (basis_channels != channels) {
    Rng rng(1234);
    basis.resize(kTerms * channels);
    for (double& v : basis) v = rng.normal() / std::sqrt(static_cast<double>(kTerms));
    basis_channels = channels;
  }
  const double coef[kTerms] = {1.0, b.cos_theta, b.sin_theta, (b.l - 4.25) / 0.35, (b.w - 1.85) / 0.15};
  std::vector<double> sig(channels, 0.0);
  for (std::size_t t = 0; t < kTerms; ++t) {
    for (std::size_t c = 0; c < channels; ++c) sig[c] += coef[t] * basis[t * channels + c];
  }
  // 0-1 mark objectness; 2-3 are left for the renderer's part code.
  for (std::size_t c = 0; c < std::min(kPartChannels, channels); ++c) sig[c] = c < 2 ? 1.0 : 0.0;
  return sig;
}

afb::ViewFeatureStack render_feature_maps(const Scene& scene, std::size_t agent, const ExperimentConfig& cfg) {
  afb::ViewFeatureStack stack;
  stack.cameras = camera_rig(cfg);
  const std::size_t h = cfg.map_height, w = cfg.map_width, c = cfg.channels;
  stack.maps.assign(stack.cameras.size(), Array({h, w, c}));
  const RigidTransform to_agent = scene.poses.at(agent).inverse();
  const double sigma = cfg.blob_sigma;
  const double reach = std::ceil(5 * sigma);
  for (std::size_t g = 0; g < scene.gts.size(); ++g) {
    if (!scene.visible[agent][g]) continue;
    const AnchorBox local = geometry::transform_anchor(to_agent, scene.gts[g]);
    const auto sig = signature(local, c);
    for (std::size_t v = 0; v < stack.cameras.size(); ++v) {
      const auto hit = geometry::project(stack.cameras[v], local.center());
      if (!(hit.depth > geometry::kMinDepth)) continue;
      const double u = hit.u, vv = hit.v;
      const long c0 = std::max(0L, static_cast<long>(std::floor(u - reach)));
      const long c1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(u + reach)));
      const long r0 = std::max(0L, static_cast<long>(std::floor(vv - reach)));
      const long r1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(vv + reach)));
      Array& map = stack.maps[v];
      const auto& cam = stack.cameras[v];
      const Eigen::Matrix3d rt = cam.extrinsics().rotation().transpose();
      const geometry::Vec3 origin = -rt * cam.extrinsics().translation();
      const auto& kin = cam.intrinsics();
      for (long r = r0; r <= r1; ++r) {
        for (long col = c0; col <= c1; ++col) {
          const double du = static_cast<double>(col) - u, dv = static_cast<double>(r) - vv;
          const double k = std::exp(-(du * du + dv * dv) / (2 * sigma * sigma));
          double* cell = map.data().data() + (static_cast<std::size_t>(r) * w + static_cast<std::size_t>(col)) * c;
          for (std::size_t q = 0; q < c; ++q) cell[q] += k * sig[q];
          // Part code: where this pixel's ray meets the box's center height,
          // relative to the center. Stands in for object-part appearance.
          if (c < kPartChannels) continue;
          const geometry::Vec3 ray(rt * geometry::Vec3((static_cast<double>(col) - kin.cx) / kin.fx,
                                                       (static_cast<double>(r) - kin.cy) / kin.fy, 1.0));
          if (ray.z() > -1e-9) continue;
          const geometry::Vec3 at = origin + ((local.z - origin.z()) / ray.z()) * ray;
          cell[2] += k * std::clamp((at.x() - local.x) / kPartScale, -4.0, 4.0);
          cell[3] += k * std::clamp((at.y() - local.y) / kPartScale, -4.0, 4.0);
        }
      }
    }
  }
  return stack;
}

}  // namespace anchorfuse::sim
