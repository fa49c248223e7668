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

// Boxes, frames and cameras. Agent frames are x forward, y left, z up.
// Camera frames are x right, y down, z along the optical axis.

#pragma once

#include <Eigen/Dense>
#include <array>
#include <span>
#include <utility>
#include <vector>

#include "anchorfuse/numeric/array.hpp"

namespace anchorfuse::geometry {

using Vec3 = Eigen::Vector3d;

/// 3D box: center, size and yaw encoded as (sin, cos). `l` runs along the
/// box's heading, `w` across it, `h` vertically.
struct AnchorBox {
  double x = 0, y = 0, z = 0;
  double h = 1, w = 1, l = 1;
  double sin_theta = 0, cos_theta = 1;

  static constexpr std::size_t kParams = 8;

  /// Validates the sizes and normalizes (sin, cos). Throws
  /// std::invalid_argument on non-positive sizes or a zero orientation vector.
  static AnchorBox make(double x, double y, double z, double h, double w, double l,
                        double sin_theta, double cos_theta);
  static AnchorBox from_yaw(double x, double y, double z, double h, double w, double l,
                            double yaw);
  /// From {x, y, z, h, w, l, sin, cos}.
  static AnchorBox from_params(std::span<const double> p);

  std::array<double, kParams> params() const;
  Vec3 center() const { return {x, y, z}; }
  double yaw() const;
};

bool operator==(const AnchorBox& a, const AnchorBox& b);

/// Rows of an [n, 8] array.
std::vector<AnchorBox> boxes_from_array(const numeric::Array& rows);
numeric::Array boxes_to_array(const std::vector<AnchorBox>& boxes);

/// Network-facing encoding of boxes, [n, 8]: x and y divided by the
/// half-range extents, everything else as stored.
numeric::Array normalized_boxes(const std::vector<AnchorBox>& boxes, double half_x, double half_y);

/// Proper rigid motion stored as a 3×4 [R | t] matrix.
class RigidTransform {
 public:
  using Matrix34 = Eigen::Matrix<double, 3, 4>;

  RigidTransform() : m_(Matrix34::Identity()) {}
  /// Throws std::invalid_argument when R is not orthonormal within 1e-9 or
  /// det R != +1.
  explicit RigidTransform(const Matrix34& m);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_yaw(double yaw, const Vec3& translation);
  /// Rotation R = Rz(yaw) Ry(pitch) Rx(roll).
  static RigidTransform from_euler(double roll, double pitch, double yaw, const Vec3& translation);

  const Matrix34& matrix() const noexcept { return m_; }
  Eigen::Matrix3d rotation() const { return m_.leftCols<3>(); }
  Vec3 translation() const { return m_.col(3); }
  /// Rotation angle about z of the rotation block.
  double yaw() const;

  Vec3 apply(const Vec3& p) const { return rotation() * p + translation(); }
  /// (this ∘ other)(p) = this(other(p)).
  RigidTransform compose(const RigidTransform& other) const;
  RigidTransform inverse() const;
  /// The 12 entries, row-major.
  std::array<double, 12> flat() const;

 private:
  Matrix34 m_;
};

struct Intrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;
};

class CameraModel {
 public:
  /// `extrinsics` maps agent coordinates into the camera frame. Throws
  /// std::invalid_argument for non-positive focal lengths or image extents.
  CameraModel(Intrinsics k, RigidTransform extrinsics, std::size_t height, std::size_t width);

  const Intrinsics& intrinsics() const noexcept { return k_; }
  const RigidTransform& extrinsics() const noexcept { return ext_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  /// K · [R | t].
  const RigidTransform::Matrix34& projection() const noexcept { return proj_; }
  /// fx, fy, cx, cy followed by the 12 extrinsic entries.
  std::array<double, 16> flat() const;

 private:
  Intrinsics k_;
  RigidTransform ext_;
  std::size_t height_, width_;
  RigidTransform::Matrix34 proj_;
};

struct PixelHit {
  double u = 0, v = 0;
  double depth = 0;
  bool valid = false;
};

/// Smallest depth treated as in front of the camera.
inline constexpr double kMinDepth = 1e-6;

PixelHit project(const CameraModel& cam, const Vec3& p);

std::array<Vec3, 8> corner_points(const AnchorBox& a);

/// Box-local offset (each axis nominally in [-0.5, 0.5]) to agent
/// coordinates: scaled by (l, w, h), rotated by yaw, moved to the center.
Vec3 box_point(const AnchorBox& a, const Vec3& offset);

using PointPool = std::vector<Vec3>;

/// [center | 8 corners | learnable], learnable given as box-local offsets.
PointPool build_point_pool(const AnchorBox& a, const std::vector<Vec3>& learnable_offsets);

AnchorBox transform_anchor(const RigidTransform& t, const AnchorBox& a);

/// [|a|, |b|] BEV center distances.
numeric::Array bev_distance_matrix(const std::vector<AnchorBox>& a, const std::vector<AnchorBox>& b);

/// Axis-aligned bounds of the oriented box's corners.
std::pair<Vec3, Vec3> aabb_envelope(const AnchorBox& a);

/// BEV rectangle corners, counter-clockwise.
std::array<Eigen::Vector2d, 4> bev_corners(const AnchorBox& a);
double convex_polygon_area(const std::vector<Eigen::Vector2d>& poly);
/// Rotated-rectangle IoU in the ground plane.
double bev_iou(const AnchorBox& a, const AnchorBox& b);

}  // namespace anchorfuse::geometry
