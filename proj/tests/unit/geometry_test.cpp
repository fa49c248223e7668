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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <doctest.h>

#include "anchorfuse/geometry/geometry.hpp"
#include "anchorfuse/numeric/rng.hpp"

using namespace anchorfuse::geometry;
using anchorfuse::numeric::Rng;

namespace {

constexpr double kPi = std::numbers::pi;

AnchorBox random_box(Rng& rng) {
  return AnchorBox::from_yaw(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-1, 3), rng.uniform(0.3, 3),
                             rng.uniform(0.3, 3), rng.uniform(0.3, 6), rng.uniform(-kPi, kPi));
}

RigidTransform random_transform(Rng& rng) {
  return RigidTransform::from_euler(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-kPi, kPi),
                                    Vec3(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-2, 2)));
}

std::set<std::array<long, 3>> rounded(const std::array<Vec3, 8>& pts) {
  std::set<std::array<long, 3>> out;
  for (const auto& p : pts) out.insert({std::lround(p.x() * 1e6), std::lround(p.y() * 1e6), std::lround(p.z() * 1e6)});
  return out;
}

// Axis-aligned overlap for theta = 0 boxes.
double aligned_iou(const AnchorBox& a, const AnchorBox& b) {
  const double ox = std::max(0.0, std::min(a.x + a.l / 2, b.x + b.l / 2) - std::max(a.x - a.l / 2, b.x - b.l / 2));
  const double oy = std::max(0.0, std::min(a.y + a.w / 2, b.y + b.w / 2) - std::max(a.y - a.w / 2, b.y - b.w / 2));
  const double inter = ox * oy;
  return inter / (a.l * a.w + b.l * b.w - inter);
}

}  // namespace

TEST_CASE("anchor boxes validate and normalize") {
  CHECK_THROWS_AS(AnchorBox::make(0, 0, 0, 0, 1, 1, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(AnchorBox::make(0, 0, 0, 1, 1, 1, 0, 0), std::invalid_argument);
  const AnchorBox b = AnchorBox::make(0, 0, 0, 1, 1, 1, 3, 4);
  CHECK(b.sin_theta == doctest::Approx(0.6));
  CHECK(b.cos_theta == doctest::Approx(0.8));
  const auto p = b.params();
  CHECK(AnchorBox::from_params(p) == b);
}

TEST_CASE("corner points") {
  const AnchorBox cube = AnchorBox::from_yaw(0, 0, 0, 1, 1, 1, 0);
  for (const auto& c : corner_points(cube)) {
    CHECK(std::abs(c.x()) == 0.5);
    CHECK(std::abs(c.y()) == 0.5);
    CHECK(std::abs(c.z()) == 0.5);
  }
  CHECK(rounded(corner_points(AnchorBox::from_yaw(0, 0, 0, 1, 1, 1, kPi / 2))) == rounded(corner_points(cube)));

  const AnchorBox longer = AnchorBox::from_yaw(0, 0, 0, 1, 1, 2, kPi / 2);  // h, w, l
  for (const auto& c : corner_points(longer)) {
    CHECK(std::abs(c.x()) == doctest::Approx(0.5));
    CHECK(std::abs(c.y()) == doctest::Approx(1.0));
  }
}

TEST_CASE("box-local points") {
  const AnchorBox b = AnchorBox::from_yaw(3, 4, 5, 2, 2, 2, 0);
  const Vec3 p = box_point(b, Vec3(0.5, 0, 0));
  CHECK(p.x() == doctest::Approx(4));
  CHECK(p.y() == doctest::Approx(4));
  CHECK(p.z() == doctest::Approx(5));
  const Vec3 q = box_point(AnchorBox::from_yaw(3, 4, 5, 2, 2, 2, kPi / 2), Vec3(0.5, 0, 0));
  CHECK(q.x() == doctest::Approx(3));
  CHECK(q.y() == doctest::Approx(5));
  CHECK(box_point(b, Vec3::Zero()) == b.center());
}

TEST_CASE("point pool layout") {
  const AnchorBox cube = AnchorBox::from_yaw(1, 2, 3, 1, 1, 1, 0.4);
  CHECK(build_point_pool(cube, {}).size() == 9);
  const std::vector<Vec3> offsets(4, Vec3(0.1, -0.2, 0.3));
  const auto pool = build_point_pool(cube, offsets);
  REQUIRE(pool.size() == 13);
  CHECK(pool[0] == cube.center());
  const auto corners = corner_points(cube);
  for (std::size_t i = 0; i < 8; ++i) CHECK((pool[1 + i] - corners[i]).norm() <= 1e-12);
}

TEST_CASE("pinhole projection") {
  const Intrinsics k{100, 100, 50, 50};
  const CameraModel cam(k, RigidTransform::identity(), 100, 100);
  const auto axis = project(cam, Vec3(0, 0, 7));
  CHECK(axis.valid);
  CHECK(axis.u == doctest::Approx(50));
  CHECK(axis.v == doctest::Approx(50));
  CHECK_FALSE(project(cam, Vec3(0, 0, -1)).valid);
  const auto hit = project(cam, Vec3(1, 0, 2));
  CHECK(hit.u == doctest::Approx(100));
  CHECK(hit.v == doctest::Approx(50));

  const auto near = project(cam, Vec3(1 + 1e-7, -0.3, 2));
  CHECK(std::abs(near.u - hit.u) < 1e-4);
  CHECK_THROWS_AS(CameraModel(Intrinsics{0, 1, 0, 0}, RigidTransform::identity(), 10, 10), std::invalid_argument);
}

TEST_CASE("rigid transforms") {
  Eigen::Matrix<double, 3, 4> skew = Eigen::Matrix<double, 3, 4>::Identity();
  skew(0, 1) = 0.1;
  CHECK_THROWS_AS(RigidTransform{skew}, std::invalid_argument);
  Eigen::Matrix<double, 3, 4> mirror = Eigen::Matrix<double, 3, 4>::Identity();
  mirror(2, 2) = -1;
  CHECK_THROWS_AS(RigidTransform{mirror}, std::invalid_argument);

  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const RigidTransform t = random_transform(rng);
    const Vec3 p(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    CHECK((t.inverse().apply(t.apply(p)) - p).norm() < 1e-9);
    CHECK((t.compose(t.inverse()).matrix() - RigidTransform::identity().matrix()).norm() < 1e-9);
  }
}

TEST_CASE("anchor transforms") {
  Rng rng(8);
  const AnchorBox a = random_box(rng);
  CHECK(transform_anchor(RigidTransform::identity(), a) == a);

  const AnchorBox moved = transform_anchor(RigidTransform::from_yaw(0, Vec3(10, 0, 0)), a);
  CHECK(moved.x == doctest::Approx(a.x + 10));
  CHECK(moved.y == doctest::Approx(a.y));
  CHECK(moved.sin_theta == doctest::Approx(a.sin_theta));
  CHECK(moved.cos_theta == doctest::Approx(a.cos_theta));

  for (int i = 0; i < 200; ++i) {
    const AnchorBox b = random_box(rng);
    const RigidTransform t = RigidTransform::from_yaw(rng.uniform(-kPi, kPi),
                                                      Vec3(rng.uniform(-30, 30), rng.uniform(-30, 30), 0));
    const AnchorBox back = transform_anchor(t.inverse(), transform_anchor(t, b));
    const auto p = b.params(), q = back.params();
    for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(p[k] - q[k]) < 1e-9);
  }
}

TEST_CASE("bev distances") {
  const AnchorBox o = AnchorBox::from_yaw(0, 0, 0, 1, 1, 1, 0), f = AnchorBox::from_yaw(3, 4, 9, 1, 1, 1, 0);
  CHECK(bev_distance_matrix({o}, {f}).at(0, 0) == 5.0);

  Rng rng(9);
  std::vector<AnchorBox> a, b;
  for (int i = 0; i < 7; ++i) a.push_back(random_box(rng));
  for (int i = 0; i < 5; ++i) b.push_back(random_box(rng));
  const auto self = bev_distance_matrix(a, a);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(self.at(i, i) == 0.0);
  const auto d = bev_distance_matrix(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double dx = a[i].x - b[j].x, dy = a[i].y - b[j].y;
      CHECK(std::abs(d.at(i, j) - std::sqrt(dx * dx + dy * dy)) <= 1e-12);
    }
  }
}

TEST_CASE("aabb envelopes") {
  const auto [lo, hi] = aabb_envelope(AnchorBox::from_yaw(0, 0, 0, 1, 1, 1, 0));
  CHECK(lo == Vec3(-0.5, -0.5, -0.5));
  CHECK(hi == Vec3(0.5, 0.5, 0.5));

  const auto [lo2, hi2] = aabb_envelope(AnchorBox::from_yaw(0, 0, 0, 1, 1, 2, kPi / 4));
  const double half = (2 * std::cos(kPi / 4) + 1 * std::sin(kPi / 4)) / 2;
  CHECK(hi2.x() == doctest::Approx(half).epsilon(1e-12));
  CHECK(hi2.y() == doctest::Approx(half).epsilon(1e-12));
  CHECK(half == doctest::Approx(1.0607).epsilon(1e-4));

  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    const AnchorBox b = random_box(rng);
    const auto [l, h] = aabb_envelope(b);
    for (const auto& c : corner_points(b)) {
      CHECK(((c.array() >= l.array()).all() && (c.array() <= h.array()).all()));
    }
  }
}

TEST_CASE("bev iou") {
  const AnchorBox unit = AnchorBox::from_yaw(0, 0, 0, 1, 1, 1, 0);
  CHECK(bev_iou(unit, unit) == doctest::Approx(1.0));
  CHECK(bev_iou(unit, AnchorBox::from_yaw(5, 5, 0, 1, 1, 1, 0)) == 0.0);
  CHECK(bev_iou(unit, AnchorBox::from_yaw(0.5, 0, 0, 1, 1, 1, 0)) == doctest::Approx(1.0 / 3.0));

  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    const AnchorBox a = random_box(rng), b = random_box(rng);
    const double ab = bev_iou(a, b);
    CHECK(ab == doctest::Approx(bev_iou(b, a)).epsilon(1e-12));
    CHECK((ab >= 0.0 && ab <= 1.0));

    const AnchorBox p = AnchorBox::from_yaw(rng.uniform(-2, 2), rng.uniform(-2, 2), 0, 1, rng.uniform(0.5, 3),
                                            rng.uniform(0.5, 3), 0);
    const AnchorBox q = AnchorBox::from_yaw(rng.uniform(-2, 2), rng.uniform(-2, 2), 0, 1, rng.uniform(0.5, 3),
                                            rng.uniform(0.5, 3), 0);
    CHECK(bev_iou(p, q) == doctest::Approx(aligned_iou(p, q)).epsilon(1e-12));
  }
}
