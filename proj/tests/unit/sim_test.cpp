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

#include <cmath>
#include <limits>
#include <sstream>

#include <doctest.h>

#include "anchorfuse/errors.hpp"
#include "anchorfuse/sim/experiment.hpp"

using namespace anchorfuse;
using namespace anchorfuse::sim;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.anchors = 8;
  c.max_gts = 8;
  c.channels = 8;
  c.heads = 2;
  c.layers = 2;
  c.fused_layers = {1};
  c.top_k = 4;
  c.tau = 0.0;
  c.views = 2;
  c.map_height = c.map_width = 16;
  c.focal = 17;
  c.train_steps = 3;
  c.batch_size = 1;
  c.eval_scenes = 3;
  return c;
}

Scene lone_box_scene(bool visible) {
  Scene s;
  s.poses = {RigidTransform::identity()};
  s.transforms = {{RigidTransform::identity()}};
  s.gts = {AnchorBox::from_yaw(6, 2, 0.8, 1.6, 1.9, 4.2, 0.4)};
  s.visible = {{static_cast<std::uint8_t>(visible)}};
  return s;
}

}  // namespace

TEST_CASE("config text") {
  const ExperimentConfig d;
  CHECK(to_text(parse_config(to_text(d))) == to_text(d));
  const auto c = parse_config("version = 1\n# comment\nanchors = 12   # trailing\nfused_layers = 1,3\n");
  CHECK(c.anchors == 12);
  CHECK(c.fused_layers == std::set<std::size_t>{1, 3});
  CHECK(parse_config("version = 1\nfused_layers = none\n").fused_layers.empty());

  CHECK_THROWS_AS(parse_config("anchors = 12\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("version = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("version = 1\nbogus = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("version = 1\nanchors = twelve\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("version = 1\nanchors\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("version = 1\nfused_layers = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("version = 1\nchannels = 30\nheads = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("version = 1\ntop_k = 49\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("version = 1\nanchors = 10\ntop_k = 5\n"), ConfigError);  // max_gts 12
  CHECK_THROWS_AS(load_config("/nonexistent/x.cfg"), ConfigError);
  try {
    parse_config("version = 1\n\nanchors = -1\n");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("scene generation") {
  const ExperimentConfig cfg;
  SUBCASE("deterministic per seed") {
    const auto a = generate_scene(cfg, 42), b = generate_scene(cfg, 42), c = generate_scene(cfg, 43);
    CHECK(a.gts == b.gts);
    CHECK(a.gts != c.gts);
  }
  SUBCASE("invariants hold") {
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto sc = generate_scene(cfg, s);
      CHECK_NOTHROW(sc.check());
      CHECK(sc.agents() == cfg.agents);
      CHECK(sc.gts.size() >= cfg.min_gts);
      CHECK(sc.gts.size() <= cfg.max_gts);
    }
  }
  SUBCASE("one agent") {
    auto c = cfg;
    c.agents = 1;
    const auto sc = generate_scene(c, 5);
    CHECK(sc.agents() == 1);
    CHECK(sc.transforms.size() == 1);
  }
  SUBCASE("few gts leave no room for occluders") {
    auto c = cfg;
    c.min_gts = c.max_gts = 3;
    // Boxes nobody sees are dropped, so only the upper bound is exact.
    for (std::uint64_t s = 0; s < 30; ++s) CHECK(generate_scene(c, s).gts.size() <= 3);
  }
  SUBCASE("range too small") {
    auto c = cfg;
    c.range_x = 8;
    CHECK_THROWS_AS(generate_scene(c, 1), ConfigError);
  }
  SUBCASE("the heavy layout hides something from the ego") {
    std::size_t hidden = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      for (auto v : agent_ground_truth_visibility(generate_scene(cfg, s), 0, cfg)) hidden += v == 0;
    }
    CHECK(hidden > 0);
  }
}

TEST_CASE("segment and box") {
  const auto box = AnchorBox::from_yaw(5, 0, 0, 1, 2, 2, 0);
  CHECK(segment_hits_box({0, 0}, {10, 0}, box));
  CHECK_FALSE(segment_hits_box({0, 3}, {10, 3}, box));
  CHECK_FALSE(segment_hits_box({0, 0}, {3, 0}, box));
}

TEST_CASE("feature rendering") {
  auto cfg = tiny();
  cfg.map_height = cfg.map_width = 64;
  cfg.focal = 68;
  cfg.views = 4;

  SUBCASE("nothing visible renders zeros") {
    const auto stack = render_feature_maps(lone_box_scene(false), 0, cfg);
    REQUIRE(stack.maps.size() == 4);
    for (const auto& m : stack.maps) {
      for (double v : m.data()) CHECK(v == 0.0);
    }
  }
  SUBCASE("one blob at the projected center") {
    const auto scene = lone_box_scene(true);
    const auto stack = render_feature_maps(scene, 0, cfg);
    const auto sig = signature(scene.gts[0], cfg.channels);
    std::size_t checked = 0;
    for (std::size_t v = 0; v < stack.maps.size(); ++v) {
      const auto hit = geometry::project(stack.cameras[v], scene.gts[0].center());
      if (!(hit.depth > geometry::kMinDepth)) continue;
      const long col = std::lround(hit.u), row = std::lround(hit.v);
      if (col < 0 || row < 0 || col >= 64 || row >= 64) continue;
      const double du = col - hit.u, dv = row - hit.v;
      const double k = std::exp(-(du * du + dv * dv) / (2 * cfg.blob_sigma * cfg.blob_sigma));
      const double* cell = stack.maps[v].data().data() + (static_cast<std::size_t>(row) * 64 + static_cast<std::size_t>(col)) * cfg.channels;
      for (std::size_t q = 0; q < cfg.channels; ++q) {
        if (q == 2 || q == 3) continue;
        CHECK(cell[q] == doctest::Approx(k * sig[q]).epsilon(1e-12));
      }
      // Part code oracle: the point on the center's height plane that
      // projects onto this pixel, from P X ~ (col, row, 1).
      const auto& P = stack.cameras[v].projection();
      const geometry::Vec3 c3 = scene.gts[0].center();
      Eigen::Matrix2d A;
      Eigen::Vector2d rhs;
      for (int i = 0; i < 2; ++i) {
        const double pix = i == 0 ? static_cast<double>(col) : static_cast<double>(row);
        const Eigen::RowVector4d e = P.row(i) - pix * P.row(2);
        A(i, 0) = e(0);
        A(i, 1) = e(1);
        rhs(i) = -(e(2) * c3.z() + e(3));
      }
      const Eigen::Vector2d xy = A.fullPivLu().solve(rhs);
      CHECK(cell[2] == doctest::Approx(k * (xy(0) - c3.x()) / 2.0).epsilon(1e-9));
      CHECK(cell[3] == doctest::Approx(k * (xy(1) - c3.y()) / 2.0).epsilon(1e-9));
      ++checked;
    }
    CHECK(checked > 0);
  }
  SUBCASE("renders add up") {
    Scene two = lone_box_scene(true);
    two.gts.push_back(AnchorBox::from_yaw(-4, -7, 0.8, 1.6, 1.9, 4.2, 2.0));
    two.visible[0].push_back(1);
    Scene second = two;
    second.gts.erase(second.gts.begin());
    second.visible[0].erase(second.visible[0].begin());
    const auto both = render_feature_maps(two, 0, cfg);
    const auto a = render_feature_maps(lone_box_scene(true), 0, cfg);
    const auto b = render_feature_maps(second, 0, cfg);
    for (std::size_t v = 0; v < both.maps.size(); ++v) {
      for (std::size_t i = 0; i < both.maps[v].size(); ++i) {
        CHECK(std::abs(both.maps[v][i] - a.maps[v][i] - b.maps[v][i]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("training loop") {
  const auto cfg = tiny();
  SUBCASE("zero learning rate keeps the initial parameters") {
    auto c = cfg;
    c.learning_rate = 0;
    const auto r = train(c);
    CHECK(r.params == init_params(c));
    REQUIRE(r.losses.size() == 3);
    CHECK(r.losses[0] == batch_loss(c, init_params(c), 0));
    CHECK(r.losses[2] == batch_loss(c, init_params(c), 2));
  }
  SUBCASE("deterministic and logged") {
    std::ostringstream log1, log2;
    TrainOptions o1, o2;
    o1.loss_log = &log1;
    o2.loss_log = &log2;
    const auto a = train(cfg, o1), b = train(cfg, o2);
    CHECK(a.params == b.params);
    CHECK(a.losses == b.losses);
    CHECK(log1.str() == log2.str());
    CHECK(log1.str().rfind("# step loss grad_norm\n", 0) == 0);
    CHECK_FALSE(a.params == init_params(cfg));
  }
  SUBCASE("non-finite parameters stop training") {
    auto bad = init_params(cfg);
    bad.get_mut(bad.names().front())[0] = std::numeric_limits<double>::quiet_NaN();
    TrainOptions o;
    o.init = &bad;
    CHECK_THROWS_AS(train(cfg, o), NumericalError);
  }
  SUBCASE("different seeds differ") {
    auto c = cfg;
    c.seed = 2;
    CHECK(train(c).losses != train(cfg).losses);
  }
}

TEST_CASE("evaluation and ablation") {
  const auto cfg = tiny();
  const auto store = init_params(cfg);
  const auto a = evaluate(cfg, store), b = evaluate(cfg, store);
  CHECK(a.ap == b.ap);
  REQUIRE(a.ap.size() == 3);
  CHECK(a.scenes.size() == 3);
  CHECK(a.ap[0] >= a.ap[1]);
  CHECK(a.ap[1] >= a.ap[2]);
  CHECK(a.bandwidth.records.size() == 3 * cfg.agents * cfg.fused_layers.size());
  for (const auto& r : a.bandwidth.records) CHECK(r.bytes == collab::message_bytes(r.anchors, cfg.channels));

  PipelineOptions solo;
  solo.collaborate = false;
  CHECK(evaluate(cfg, store, solo).bandwidth.total_bytes == 0);

  std::ostringstream csv;
  write_metrics_csv(csv, {{"collab", &a}});
  CHECK(csv.str().rfind("mode,scene,gts,occluded,ap30,ap50,ap70\n", 0) == 0);

  const auto rows = ablate(cfg, store, "K", {"2", "4", "8"});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].mean_message_bytes <= rows[2].mean_message_bytes);
  CHECK_THROWS_AS(ablate(cfg, store, "Q", {"1"}), ConfigError);
  CHECK_THROWS_AS(ablate(cfg, store, "component", {"wings"}), ConfigError);
  CHECK_NOTHROW(ablate(cfg, store, "component", {"none", "no_laaf"}));
}

TEST_CASE("interior sweep check") {
  auto row = [](double ap50) { return AblationRow{"K", "", {0, ap50, 0}, 0}; };
  CHECK(interior_is_best({row(0.1), row(0.3), row(0.2)}));
  CHECK(interior_is_best({row(0.3), row(0.3), row(0.3)}));
  CHECK_FALSE(interior_is_best({row(0.4), row(0.3), row(0.2)}));
  CHECK_THROWS(interior_is_best({row(0.1), row(0.3)}));
}
