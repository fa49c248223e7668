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
#include <numeric>
#include <sstream>

#include <doctest.h>

#include "anchorfuse/detector/detector.hpp"
#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/rng.hpp"

using namespace anchorfuse;
using namespace anchorfuse::detector;
using numeric::Rng;

namespace {

double brute_force(const Array& cost) {
  const std::size_t n = cost.dim(0), m = cost.dim(1);
  std::vector<std::size_t> cols(m);
  std::iota(cols.begin(), cols.end(), 0);
  double best = INFINITY;
  do {
    double c = 0;
    for (std::size_t i = 0; i < n; ++i) c += cost.at(i, cols[i]);
    best = std::min(best, c);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

std::vector<AnchorBox> some_boxes(Rng& rng, std::size_t n) {
  std::vector<AnchorBox> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(AnchorBox::from_yaw(rng.uniform(-10, 10), rng.uniform(-10, 10), 0.8, 1.6, 1.9, 4.2,
                                      rng.uniform(-3, 3)));
  }
  return out;
}

}  // namespace

TEST_CASE("zero regression head returns the anchors") {
  ParamStore s(1);
  add_head_params(s, "head", 8);
  s.fill("head.reg", 0.0);
  Rng rng(2);
  const auto anchors = some_boxes(rng, 5);
  Tape tape;
  Array f({5, 8});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.uniform(-1, 1);
  const auto out = decode_heads(tape, s, "head", anchors, tape.constant(f), 16, 16);
  const Array expect = geometry::boxes_to_array(anchors);
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(out.boxes.value()[i] - expect[i]) <= 1e-12);
  CHECK(out.logits.shape() == numeric::Shape{5, 1});
}

TEST_CASE("decoded headings are unit vectors") {
  ParamStore s(3);
  add_head_params(s, "head", 8);
  Rng rng(4);
  const auto anchors = some_boxes(rng, 20);
  Array f({20, 8});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.uniform(-5, 5);
  Tape tape;
  const Array b = decode_heads(tape, s, "head", anchors, tape.constant(f), 16, 16).boxes.value();
  // The normalizer carries a 1e-12 guard, so short raw vectors land slightly inside the circle.
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(std::abs(b.at(i, 6) * b.at(i, 6) + b.at(i, 7) * b.at(i, 7) - 1.0) <= 1e-9);
  }
}

TEST_CASE("refined anchors respect the minimum size") {
  const auto a = refine_anchors(Array::matrix({{1, 2, 3, 0.01, -4, 5, 0, 2}}), 0.2);
  REQUIRE(a.size() == 1);
  CHECK(a[0].h == 0.2);
  CHECK(a[0].w == 0.2);
  CHECK(a[0].l == 5);
  CHECK(a[0].cos_theta == 1.0);
}

TEST_CASE("assignment") {
  SUBCASE("two by two") {
    const auto a = solve_assignment(Array::matrix({{1, 2}, {2, 1}}));
    CHECK(a.cost == 2);
    CHECK(a.pred_of_gt == std::vector<std::size_t>{0, 1});
  }
  SUBCASE("anti diagonal") {
    const auto a = solve_assignment(Array::matrix({{5, 1, 9}, {1, 5, 9}}));
    CHECK(a.cost == 2);
    CHECK(a.pred_of_gt == std::vector<std::size_t>{1, 0});
  }
  SUBCASE("brute force on 6x6") {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
      Array c({6, 6});
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::floor(rng.uniform(0, 20));
      const auto a = solve_assignment(c);
      CHECK(a.cost == brute_force(c));
      std::vector<std::size_t> cols = a.pred_of_gt;
      std::sort(cols.begin(), cols.end());
      CHECK(std::adjacent_find(cols.begin(), cols.end()) == cols.end());
      double sum = 0;
      for (std::size_t i = 0; i < 6; ++i) sum += c.at(i, a.pred_of_gt[i]);
      CHECK(sum == a.cost);
    }
  }
  SUBCASE("rectangular brute force") {
    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
      Array c({3, 6});
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = rng.uniform(-1, 1);
      CHECK(solve_assignment(c).cost == doctest::Approx(brute_force(c)).epsilon(1e-12));
    }
  }
  SUBCASE("more rows than columns") {
    CHECK_THROWS_AS(solve_assignment(Array({3, 2})), InfeasibleError);
  }
  SUBCASE("no rows") {
    const auto a = solve_assignment(Array({0, 4}));
    CHECK(a.pred_of_gt.empty());
    CHECK(a.cost == 0);
  }
}

TEST_CASE("focal loss") {
  const LossWeights w;
  Tape tape;
  SUBCASE("logit zero") {
    const double l = focal_loss(tape.constant(Array({2, 1}, {0.0, 0.0})), Array({2, 1}, {1.0, 0.0}), w).value().item();
    // p = 1/2: alpha 0.25 for the positive, 0.75 for the negative.
    CHECK(l == doctest::Approx((0.25 + 0.75) * 0.25 * std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("confident and right is nearly free") {
    const double l = focal_loss(tape.constant(Array({2, 1}, {40.0, -40.0})), Array({2, 1}, {1.0, 0.0}), w).value().item();
    CHECK(l < 1e-30);
  }
  SUBCASE("cost is positive minus negative") {
    for (double x : {-3.0, -0.5, 0.0, 1.0, 4.0}) {
      Tape t;
      const double pos = focal_loss(t.constant(Array({1, 1}, {x})), Array({1, 1}, {1.0}), w).value().item();
      const double neg = focal_loss(t.constant(Array({1, 1}, {x})), Array({1, 1}, {0.0}), w).value().item();
      CHECK(focal_cost(x, w) == doctest::Approx(pos - neg).epsilon(1e-12));
    }
  }
}

TEST_CASE("set loss") {
  Rng rng(7);
  const LossWeights w;
  const auto gts = some_boxes(rng, 3);
  const std::size_t m = 6;

  SUBCASE("perfect predictions cost nothing") {
    Tape tape;
    Array boxes({m, 8});
    Array logits({m, 1}, -40.0);
    const std::vector<std::size_t> slot{4, 0, 2};
    for (std::size_t g = 0; g < 3; ++g) {
      const auto p = gts[g].params();
      for (std::size_t q = 0; q < 8; ++q) boxes.at(slot[g], q) = p[q];
      logits[slot[g]] = 40.0;
    }
    for (std::size_t q = 0; q < 8; ++q) boxes.at(1, q) = boxes.at(3, q) = boxes.at(5, q) = 100.0;
    HeadOutput out{tape.constant(boxes), tape.constant(logits)};
    const auto a = hungarian_match(boxes, logits, gts, w);
    CHECK(a.pred_of_gt == slot);
    CHECK(set_loss(tape, out, gts, a, w).value().item() < 1e-12);
  }
  SUBCASE("no ground truth leaves only background focal terms") {
    Tape tape;
    HeadOutput out{tape.constant(Array({m, 8}, 1.0)), tape.constant(Array({m, 1}))};
    const double l = set_loss(tape, out, {}, solve_assignment(Array({0, m})), w, 2.0).value().item();
    CHECK(l == doctest::Approx(w.cls * m * 0.75 * 0.25 * std::log(2.0) / 2.0).epsilon(1e-14));
  }
  SUBCASE("ground truth order does not matter") {
    Array boxes({m, 8}), logits({m, 1});
    for (std::size_t i = 0; i < boxes.size(); ++i) boxes[i] = rng.uniform(-10, 10);
    for (std::size_t i = 0; i < m; ++i) logits[i] = rng.uniform(-2, 2);
    const std::vector<AnchorBox> shuffled{gts[2], gts[0], gts[1]};
    Tape t1, t2;
    const double a = set_loss(t1, {t1.constant(boxes), t1.constant(logits)}, gts,
                              hungarian_match(boxes, logits, gts, w), w).value().item();
    const double b = set_loss(t2, {t2.constant(boxes), t2.constant(logits)}, shuffled,
                              hungarian_match(boxes, logits, shuffled, w), w).value().item();
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
  SUBCASE("a gradient step lowers the loss") {
    ParamStore s(8);
    add_head_params(s, "head", 8);
    const auto anchors = some_boxes(rng, m);
    Array f({m, 8});
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.uniform(-1, 1);
    auto loss_at = [&](const ParamStore& p, ParamStore* step) {
      Tape tape;
      const auto out = decode_heads(tape, p, "head", anchors, tape.constant(f), 16, 16);
      const auto a = hungarian_match(out.boxes.value(), out.logits.value(), gts, w);
      Var l = set_loss(tape, out, gts, a, w);
      if (step) {
        const auto g = tape.backward(l);
        for (const auto& name : step->names()) {
          Array& v = step->get_mut(name);
          const Array& d = g.at(name);
          for (std::size_t i = 0; i < v.size(); ++i) v[i] -= 1e-3 * d[i];
        }
      }
      return l.value().item();
    };
    ParamStore next = s;
    const double before = loss_at(s, &next);
    CHECK(loss_at(next, nullptr) < before);
  }
}

TEST_CASE("average precision") {
  const auto gt0 = AnchorBox::from_yaw(0, 0, 0, 1, 2, 4, 0);
  const auto gt1 = AnchorBox::from_yaw(10, 0, 0, 1, 2, 4, 0);
  const auto miss = AnchorBox::from_yaw(30, 30, 0, 1, 2, 4, 0);

  SUBCASE("perfect detections") {
    const auto ap = evaluate_ap({{0, 0.9, gt0}, {1, 0.8, gt1}}, {{gt0}, {gt1}});
    for (double v : ap) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("no predictions") {
    CHECK(evaluate_ap({}, {{gt0}}) == std::vector<double>{0, 0, 0});
  }
  SUBCASE("hand computed precision envelope") {
    // tp, fp, tp: precision 1, 1/2, 2/3 at recall 1/2, 1/2, 1.
    const auto ap = evaluate_ap({{0, 0.9, gt0}, {0, 0.8, miss}, {0, 0.7, gt1}}, {{gt0, gt1}}, {0.5});
    CHECK(ap[0] == doctest::Approx((6.0 + 5.0 * 2.0 / 3.0) / 11.0).epsilon(1e-14));
  }
  SUBCASE("a duplicate is a false positive") {
    const auto ap = evaluate_ap({{0, 0.9, gt0}, {0, 0.8, gt0}}, {{gt0}}, {0.5});
    CHECK(ap[0] == doctest::Approx(1.0).epsilon(1e-14));
    const auto late = evaluate_ap({{0, 0.9, miss}, {0, 0.8, gt0}}, {{gt0}}, {0.5});
    CHECK(late[0] == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("threshold decides") {
    // Shifted by a quarter length: IoU = 3/5.
    const auto shifted = AnchorBox::from_yaw(1, 0, 0, 1, 2, 4, 0);
    CHECK(geometry::bev_iou(shifted, gt0) == doctest::Approx(0.6));
    const auto ap = evaluate_ap({{0, 0.9, shifted}}, {{gt0}});
    CHECK(ap[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(ap[1] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(ap[2] == 0.0);
  }
  SUBCASE("scenes are matched separately") {
    CHECK(evaluate_ap({{1, 0.9, gt0}}, {{gt0}, {gt1}}, {0.5})[0] == 0.0);
  }
}

TEST_CASE("detections text round trip") {
  Rng rng(9);
  std::vector<DetectionRecord> recs;
  for (std::size_t i = 0; i < 5; ++i) recs.push_back({i / 2, i % 2, some_boxes(rng, 1)[0], rng.uniform(0, 1)});
  std::ostringstream a;
  write_detections(a, recs);
  std::istringstream in(a.str());
  const auto back = read_detections(in);
  REQUIRE(back.size() == 5);
  CHECK(back[3].scene == 1);
  CHECK(back[3].agent == 1);
  CHECK(back[3].confidence == doctest::Approx(recs[3].confidence).epsilon(1e-8));
  std::ostringstream b;
  write_detections(b, back);
  CHECK(a.str() == b.str());
  std::istringstream bad("0 1 2 3\n");
  CHECK_THROWS(read_detections(bad));
}
