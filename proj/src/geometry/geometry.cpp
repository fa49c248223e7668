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

#include "anchorfuse/geometry/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "anchorfuse/errors.hpp"

namespace anchorfuse::geometry {

AnchorBox AnchorBox::make(double x, double y, double z, double h, double w, double l,
                          double sin_theta, double cos_theta) {
  if (!(h > 0 && w > 0 && l > 0)) throw std::invalid_argument("AnchorBox: sizes must be positive");
  const double norm = std::hypot(sin_theta, cos_theta);
  if (!(norm > 0) || !std::isfinite(norm)) {
    throw std::invalid_argument("AnchorBox: orientation vector must be nonzero and finite");
  }
  return AnchorBox{x, y, z, h, w, l, sin_theta / norm, cos_theta / norm};
}

AnchorBox AnchorBox::from_yaw(double x, double y, double z, double h, double w, double l, double yaw) {
  return make(x, y, z, h, w, l, std::sin(yaw), std::cos(yaw));
}

AnchorBox AnchorBox::from_params(std::span<const double> p) {
  if (p.size() != kParams) throw DimensionError("AnchorBox needs 8 parameters");
  return make(p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]);
}

std::array<double, AnchorBox::kParams> AnchorBox::params() const {
  return {x, y, z, h, w, l, sin_theta, cos_theta};
}

double AnchorBox::yaw() const { return std::atan2(sin_theta, cos_theta); }

bool operator==(const AnchorBox& a, const AnchorBox& b) { return a.params() == b.params(); }

std::vector<AnchorBox> boxes_from_array(const numeric::Array& rows) {
  if (rows.rank() != 2 || rows.dim(1) != AnchorBox::kParams) {
    throw DimensionError("boxes_from_array: expected [n,8], got " + numeric::shape_str(rows.shape()));
  }
  std::vector<AnchorBox> out;
  out.reserve(rows.dim(0));
  for (std::size_t i = 0; i < rows.dim(0); ++i) {
    out.push_back(AnchorBox::from_params(rows.data().subspan(i * AnchorBox::kParams, AnchorBox::kParams)));
  }
  return out;
}

numeric::Array boxes_to_array(const std::vector<AnchorBox>& boxes) {
  std::vector<double> data;
  data.reserve(boxes.size() * AnchorBox::kParams);
  for (const auto& b : boxes) {
    const auto p = b.params();
    data.insert(data.end(), p.begin(), p.end());
  }
  return numeric::Array({boxes.size(), AnchorBox::kParams}, std::move(data));
}

numeric::Array normalized_boxes(const std::vector<AnchorBox>& boxes, double half_x, double half_y) {
  numeric::Array out = boxes_to_array(boxes);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    out.at(i, 0) /= half_x;
    out.at(i, 1) /= half_y;
  }
  return out;
}

RigidTransform::RigidTransform(const Matrix34& m) : m_(m) {
  const Eigen::Matrix3d r = m.leftCols<3>();
  if (!m.allFinite()) throw std::invalid_argument("RigidTransform: non-finite entries");
  if (((r.transpose() * r) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("RigidTransform: rotation block is not orthonormal");
  }
  if (std::abs(r.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument("RigidTransform: rotation determinant is not +1");
  }
}

RigidTransform RigidTransform::from_yaw(double yaw, const Vec3& translation) {
  return from_euler(0.0, 0.0, yaw, translation);
}

RigidTransform RigidTransform::from_euler(double roll, double pitch, double yaw, const Vec3& translation) {
  const Eigen::Matrix3d r = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                             Eigen::AngleAxisd(roll, Vec3::UnitX()))
                                .toRotationMatrix();
  Matrix34 m;
  m.leftCols<3>() = r;
  m.col(3) = translation;
  return RigidTransform(m);
}

double RigidTransform::yaw() const { return std::atan2(m_(1, 0), m_(0, 0)); }

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  Matrix34 m;
  m.leftCols<3>() = rotation() * other.rotation();
  m.col(3) = rotation() * other.translation() + translation();
  RigidTransform out;
  out.m_ = m;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Matrix3d rt = rotation().transpose();
  Matrix34 m;
  m.leftCols<3>() = rt;
  m.col(3) = -rt * translation();
  RigidTransform out;
  out.m_ = m;
  return out;
}

std::array<double, 12> RigidTransform::flat() const {
  std::array<double, 12> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(r * 4 + c)] = m_(r, c);
  }
  return out;
}

CameraModel::CameraModel(Intrinsics k, RigidTransform extrinsics, std::size_t height, std::size_t width)
    : k_(k), ext_(std::move(extrinsics)), height_(height), width_(width) {
  if (!(k.fx > 0 && k.fy > 0)) throw std::invalid_argument("CameraModel: focal lengths must be positive");
  if (height == 0 || width == 0) throw std::invalid_argument("CameraModel: empty image");
  Eigen::Matrix3d kmat;
  kmat << k.fx, 0, k.cx, 0, k.fy, k.cy, 0, 0, 1;
  proj_ = kmat * ext_.matrix();
}

std::array<double, 16> CameraModel::flat() const {
  std::array<double, 16> out{};
  out[0] = k_.fx;
  out[1] = k_.fy;
  out[2] = k_.cx;
  out[3] = k_.cy;
  const auto e = ext_.flat();
  std::copy(e.begin(), e.end(), out.begin() + 4);
  return out;
}

PixelHit project(const CameraModel& cam, const Vec3& p) {
  const Eigen::Vector3d h = cam.projection() * p.homogeneous();
  PixelHit hit;
  hit.depth = h.z();
  if (!(h.z() > kMinDepth)) return hit;
  hit.u = h.x() / h.z();
  hit.v = h.y() / h.z();
  hit.valid = hit.u >= 0 && hit.u < static_cast<double>(cam.width()) && hit.v >= 0 &&
              hit.v < static_cast<double>(cam.height());
  return hit;
}

Vec3 box_point(const AnchorBox& a, const Vec3& offset) {
  const double lx = offset.x() * a.l, ly = offset.y() * a.w, lz = offset.z() * a.h;
  return {a.x + a.cos_theta * lx - a.sin_theta * ly, a.y + a.sin_theta * lx + a.cos_theta * ly, a.z + lz};
}

std::array<Vec3, 8> corner_points(const AnchorBox& a) {
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const Vec3 offset((i & 4) ? 0.5 : -0.5, (i & 2) ? 0.5 : -0.5, (i & 1) ? 0.5 : -0.5);
    out[static_cast<std::size_t>(i)] = box_point(a, offset);
  }
  return out;
}

PointPool build_point_pool(const AnchorBox& a, const std::vector<Vec3>& learnable_offsets) {
  PointPool pool;
  pool.reserve(9 + learnable_offsets.size());
  pool.push_back(a.center());
  for (const auto& c : corner_points(a)) pool.push_back(c);
  for (const auto& o : learnable_offsets) pool.push_back(box_point(a, o));
  return pool;
}

AnchorBox transform_anchor(const RigidTransform& t, const AnchorBox& a) {
  const Vec3 c = t.apply(a.center());
  const double phi = t.yaw();
  const double sp = std::sin(phi), cp = std::cos(phi);
  return AnchorBox::make(c.x(), c.y(), c.z(), a.h, a.w, a.l, sp * a.cos_theta + cp * a.sin_theta,
                         cp * a.cos_theta - sp * a.sin_theta);
}

numeric::Array bev_distance_matrix(const std::vector<AnchorBox>& a, const std::vector<AnchorBox>& b) {
  numeric::Array d({a.size(), b.size()});
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) d.at(i, j) = std::hypot(a[i].x - b[j].x, a[i].y - b[j].y);
  }
  return d;
}

std::pair<Vec3, Vec3> aabb_envelope(const AnchorBox& a) {
  const auto corners = corner_points(a);
  Vec3 lo = corners[0], hi = corners[0];
  for (const auto& c : corners) {
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  return {lo, hi};
}

std::array<Eigen::Vector2d, 4> bev_corners(const AnchorBox& a) {
  static constexpr double kSigns[4][2] = {{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}};
  std::array<Eigen::Vector2d, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    const Vec3 p = box_point(a, Vec3(kSigns[i][0], kSigns[i][1], 0.0));
    out[i] = p.head<2>();
  }
  return out;
}

double convex_polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    twice += p.x() * q.y() - q.x() * p.y();
  }
  return std::abs(twice) * 0.5;
}

namespace {

double cross(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Sutherland-Hodgman: clip `subject` by the counter-clockwise convex `clip`.
std::vector<Eigen::Vector2d> clip_polygon(std::vector<Eigen::Vector2d> subject,
                                          const std::array<Eigen::Vector2d, 4>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const auto& a = clip[e];
    const auto& b = clip[(e + 1) % clip.size()];
    std::vector<Eigen::Vector2d> out;
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const auto& p = subject[i];
      const auto& q = subject[(i + 1) % subject.size()];
      const double sp = cross(a, b, p), sq = cross(a, b, q);
      if (sp >= 0) out.push_back(p);
      if ((sp >= 0) != (sq >= 0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + t * (q - p));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

}  // namespace

double bev_iou(const AnchorBox& a, const AnchorBox& b) {
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const auto inter_poly = clip_polygon({ca.begin(), ca.end()}, cb);
  const double inter = inter_poly.size() >= 3 ? convex_polygon_area(inter_poly) : 0.0;
  const double area_a = a.l * a.w, area_b = b.l * b.w;
  const double uni = area_a + area_b - inter;
  if (!(uni > 0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace anchorfuse::geometry
