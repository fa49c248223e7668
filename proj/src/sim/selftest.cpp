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

#include "anchorfuse/sim/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "anchorfuse/attention/attention.hpp"
#include "anchorfuse/numeric/compose.hpp"
#include "anchorfuse/numeric/rng.hpp"
#include "anchorfuse/sim/pipeline.hpp"

namespace anchorfuse::sim {

using numeric::Array;
using numeric::Rng;
using numeric::Shape;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Array random_array(Rng& rng, Shape shape, double lo, double hi) {
  Array a(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

// Values bounded away from zero, for ops with a kink there.
Array away_from_zero(Rng& rng, Shape shape) {
  Array a(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.1, 2.0);
  return a;
}

AnchorBox random_box(Rng& rng, double spread) {
  return AnchorBox::from_yaw(rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(0.0, 2.0),
                             rng.uniform(0.5, 2.5), rng.uniform(0.5, 3.0), rng.uniform(0.5, 5.0),
                             rng.uniform(-3.14, 3.14));
}

// Fixed pseudo-random projection to a scalar.
Var project(Var y) {
  Array w(y.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.3 * static_cast<double>(i) + 0.7);
  return sum(mul(y, y.tape().constant(std::move(w))));
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : "; ") + p;
  return out;
}

ExperimentConfig gradient_config() {
  ExperimentConfig cfg;
  cfg.anchors = 8;
  cfg.max_gts = 8;
  cfg.channels = 8;
  cfg.heads = 2;
  cfg.learnable_points = 2;
  cfg.layers = 1;
  cfg.fused_layers = {1};
  cfg.top_k = 4;
  cfg.tau = 0.0;
  cfg.views = 2;
  cfg.map_height = 16;
  cfg.map_width = 16;
  cfg.focal = 17;
  return cfg;
}

}  // namespace

SuiteResult check_hungarian(std::size_t trials, std::uint64_t seed) {
  const auto t0 = Clock::now();
  Rng rng(seed);
  SuiteResult r{"hungarian", true, "", 0};
  std::size_t worst = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t cols = 1 + rng.index(7);
    const std::size_t rows = 1 + rng.index(cols);
    const Array cost = random_array(rng, {rows, cols}, -5.0, 5.0);
    const auto got = detector::solve_assignment(cost);

    std::vector<std::size_t> perm(cols);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double c = 0;
      for (std::size_t i = 0; i < rows; ++i) c += cost.at(i, perm[i]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));

    double recomputed = 0;
    std::vector<bool> used(cols, false);
    bool distinct = got.pred_of_gt.size() == rows;
    for (std::size_t i = 0; i < rows && distinct; ++i) {
      const std::size_t j = got.pred_of_gt[i];
      distinct = j < cols && !used[j];
      if (distinct) used[j] = true;
      if (distinct) recomputed += cost.at(i, j);
    }
    if (!distinct || got.cost != best || recomputed != best) {
      r.passed = false;
      std::ostringstream os;
      os.precision(17);
      os << "trial " << t << " (" << rows << "x" << cols << "): matcher " << got.cost << ", brute force " << best;
      r.detail = os.str();
      break;
    }
    worst = std::max(worst, cols);
  }
  if (r.passed) r.detail = std::to_string(trials) + " matrices up to " + std::to_string(worst) + " columns";
  r.seconds = since(t0);
  return r;
}

SuiteResult check_laaf(std::size_t trials, std::uint64_t seed) {
  const auto t0 = Clock::now();
  Rng rng(seed);
  SuiteResult r{"laaf", true, "", 0};
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials && r.passed; ++t) {
    const std::size_t m = 1 + rng.index(64), k = 1 + rng.index(40), c = 1 + rng.index(16);
    std::vector<AnchorBox> ego, sel;
    for (std::size_t i = 0; i < m; ++i) ego.push_back(random_box(rng, 12.0));
    for (std::size_t i = 0; i < k; ++i) {
      // Half of the centers land near an ego anchor so containment is common.
      AnchorBox b = random_box(rng, 12.0);
      if (rng.bernoulli(0.5)) {
        const AnchorBox& e = ego[rng.index(m)];
        b = AnchorBox::from_yaw(e.x + rng.uniform(-1.5, 1.5), e.y + rng.uniform(-1.5, 1.5),
                                e.z + rng.uniform(-1.0, 1.0), b.h, b.w, b.l, b.yaw());
      }
      sel.push_back(b);
    }
    const Array f = random_array(rng, {m, c}, -1.0, 1.0);
    const Array s = random_array(rng, {k, c}, -1.0, 1.0);

    Tape tape;
    collab::SelectedSet set{sel, tape.constant(s)};
    const Array got = collab::laaf(tape, ego, tape.constant(f), set).value();

    Array want = f;
    for (std::size_t i = 0; i < m; ++i) {
      const AnchorBox& e = ego[i];
      const double cs = e.cos_theta, sn = e.sin_theta;
      double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
      for (int sx = -1; sx <= 1; sx += 2) {
        for (int sy = -1; sy <= 1; sy += 2) {
          for (int sz = -1; sz <= 1; sz += 2) {
            const double px = sx * e.l / 2, py = sy * e.w / 2;
            const double p[3] = {e.x + cs * px - sn * py, e.y + sn * px + cs * py, e.z + sz * e.h / 2};
            for (int d = 0; d < 3; ++d) {
              lo[d] = std::min(lo[d], p[d]);
              hi[d] = std::max(hi[d], p[d]);
            }
          }
        }
      }
      std::vector<double> acc(c, 0.0);
      for (std::size_t j = 0; j < k; ++j) {
        const AnchorBox& q = sel[j];
        if (q.x >= lo[0] && q.x <= hi[0] && q.y >= lo[1] && q.y <= hi[1] && q.z >= lo[2] && q.z <= hi[2]) {
          ++hits;
          for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += s.at(j, ch);
        }
      }
      for (std::size_t ch = 0; ch < c; ++ch) want.at(i, ch) = f.at(i, ch) + acc[ch];
    }
    if (!(got == want)) {
      r.passed = false;
      r.detail = "trial " + std::to_string(t) + ": output differs from the double loop";
    }
  }
  if (r.passed) r.detail = std::to_string(trials) + " scenes, " + std::to_string(hits) + " contained centers";
  r.seconds = since(t0);
  return r;
}

std::vector<GradCase> gradient_cases(std::uint64_t seed) {
  using namespace numeric;
  Rng rng(seed);
  std::vector<GradCase> cases;
  auto store = [](std::initializer_list<std::pair<const char*, Array>> entries) {
    ParamStore s(11);
    for (const auto& [name, value] : entries) s.add(name, value);
    return s;
  };
  auto unary = [&](const std::string& name, Array x, Var (*op)(Var)) {
    cases.push_back({name, store({{"x", std::move(x)}}),
                     [op](Tape& t, const ParamStore& s) { return project(op(t.param(s, "x"))); }});
  };

  // closed op set
  cases.push_back({"matmul", store({{"a", random_array(rng, {3, 4}, -1, 1)}, {"b", random_array(rng, {4, 2}, -1, 1)}}),
                   [](Tape& t, const ParamStore& s) { return project(matmul(t.param(s, "a"), t.param(s, "b"))); }});
  cases.push_back({"add_broadcast",
                   store({{"a", random_array(rng, {3, 4}, -1, 1)}, {"b", random_array(rng, {4}, -1, 1)}}),
                   [](Tape& t, const ParamStore& s) { return project(add(t.param(s, "a"), t.param(s, "b"))); }});
  cases.push_back({"mul_broadcast",
                   store({{"a", random_array(rng, {3, 1}, -1, 1)}, {"b", random_array(rng, {1, 4}, -1, 1)}}),
                   [](Tape& t, const ParamStore& s) { return project(mul(t.param(s, "a"), t.param(s, "b"))); }});
  unary("relu", away_from_zero(rng, {3, 5}), relu);
  unary("sigmoid", random_array(rng, {3, 5}, -4, 4), sigmoid);
  unary("log", random_array(rng, {3, 5}, 0.5, 2.0), numeric::log);
  unary("exp", random_array(rng, {3, 5}, -2, 2), numeric::exp);
  unary("softmax", random_array(rng, {3, 5}, -2, 2), softmax_lastdim);
  {
    Array uv({6, 2});
    for (std::size_t i = 0; i < 6; ++i) {
      uv.at(i, 0) = static_cast<double>(rng.index(6)) + rng.uniform(0.1, 0.9);
      uv.at(i, 1) = static_cast<double>(rng.index(5)) + rng.uniform(0.1, 0.9);
    }
    cases.push_back({"bilinear_sample", store({{"map", random_array(rng, {6, 7, 3}, -1, 1)}, {"uv", uv}}),
                     [](Tape& t, const ParamStore& s) {
                       return project(bilinear_sample(t.param(s, "map"), t.param(s, "uv")));
                     }});
  }
  unary("sum", random_array(rng, {3, 4}, -1, 1), [](Var x) { return sum(x); });
  unary("sum_axis", random_array(rng, {3, 4, 2}, -1, 1), [](Var x) { return sum(x, 1); });
  unary("mean", random_array(rng, {3, 4}, -1, 1), [](Var x) { return mean(x); });
  unary("mean_axis", random_array(rng, {3, 4}, -1, 1), [](Var x) { return mean(x, 0); });
  cases.push_back({"concat", store({{"a", random_array(rng, {2, 3}, -1, 1)}, {"b", random_array(rng, {2, 2}, -1, 1)}}),
                   [](Tape& t, const ParamStore& s) {
                     Var a = t.param(s, "a"), b = t.param(s, "b");
                     return add(project(concat({a, b}, 1)), project(concat({transpose(a), transpose(b)}, 0)));
                   }});
  unary("gather", random_array(rng, {4, 3}, -1, 1),
        [](Var x) { return gather(x, {0, 5, 5, 11, 2, 7}, {2, 3}); });
  unary("reshape", random_array(rng, {4, 3}, -1, 1), [](Var x) { return reshape(x, {2, 6}); });

  // composed ops
  unary("neg", random_array(rng, {3, 4}, -1, 1), neg);
  cases.push_back({"sub", store({{"a", random_array(rng, {3, 4}, -1, 1)}, {"b", random_array(rng, {3, 4}, -1, 1)}}),
                   [](Tape& t, const ParamStore& s) { return project(sub(t.param(s, "a"), t.param(s, "b"))); }});
  unary("scale", random_array(rng, {3, 4}, -1, 1), [](Var x) { return scale(x, -2.5); });
  unary("add_scalar", random_array(rng, {3, 4}, -1, 1), [](Var x) { return add_scalar(x, 0.75); });
  unary("square", random_array(rng, {3, 4}, -1, 1), square);
  unary("abs", away_from_zero(rng, {3, 4}), numeric::abs);
  unary("softplus", random_array(rng, {3, 4}, -5, 5), softplus);
  unary("log_sigmoid", random_array(rng, {3, 4}, -5, 5), log_sigmoid);
  unary("reciprocal", random_array(rng, {3, 4}, 0.5, 2.0), reciprocal);
  cases.push_back({"divide",
                   store({{"a", random_array(rng, {3, 4}, -1, 1)}, {"b", random_array(rng, {3, 4}, 0.5, 2.0)}}),
                   [](Tape& t, const ParamStore& s) { return project(divide(t.param(s, "a"), t.param(s, "b"))); }});
  unary("layer_norm", random_array(rng, {3, 6}, -2, 2), [](Var x) { return layer_norm(x); });
  unary("transpose", random_array(rng, {3, 4}, -1, 1), transpose);
  unary("slice_cols", random_array(rng, {3, 5}, -1, 1), [](Var x) { return slice_cols(x, 1, 4); });
  unary("take_rows", random_array(rng, {4, 3}, -1, 1), [](Var x) { return take_rows(x, {3, 0, 3}); });

  // modules
  const ExperimentConfig cfg = gradient_config();
  const std::size_t c = cfg.channels, m = cfg.anchors;
  std::vector<AnchorBox> anchors;
  for (std::size_t i = 0; i < m; ++i) anchors.push_back(random_box(rng, 8.0));
  const auto cams = camera_rig(cfg);

  {
    ParamStore s(21);
    s.add_mlp("mlp", {4, 6, 3});
    s.add("x", random_array(rng, {5, 4}, -1, 1));
    cases.push_back({"mlp", s, [](Tape& t, const ParamStore& p) {
                       return project(mlp_forward(t, p, "mlp", t.param(p, "x"), Activation::kSigmoid));
                     }});
  }
  {
    ParamStore s(22);
    afb::add_camera_weight_params(s, "camera");
    cases.push_back({"camera_weights", s, [cams](Tape& t, const ParamStore& p) {
                       return project(afb::camera_weights(t, p, "camera", cams));
                     }});
  }
  {
    ParamStore s(23);
    afb::add_afb_params(s, "afb", c, cfg.learnable_points);
    s.add("F", random_array(rng, {m, c}, -1, 1));
    cases.push_back({"points_and_projection", s, [anchors, cams](Tape& t, const ParamStore& p) {
                       Var pts = afb::point_pool(t, anchors, afb::learnable_offsets(t, p, "afb", t.param(p, "F")));
                       Var total = project(pts);
                       for (const auto& cam : cams) {
                         const auto proj = afb::project_points(t, cam, pts);
                         total = add(total, project(mul(proj.uv, t.constant(proj.mask))));
                       }
                       return total;
                     }});
  }
  {
    ParamStore s(24);
    afb::add_camera_weight_params(s, "camera");
    afb::add_afb_params(s, "afb", c, cfg.learnable_points);
    s.add("F", random_array(rng, {m, c}, -1, 1));
    // Anchors near the cameras' footprint so that samples land on the maps.
    std::vector<AnchorBox> near;
    for (std::size_t i = 0; i < m; ++i) near.push_back(random_box(rng, 6.0));
    for (std::size_t v = 0; v < cams.size(); ++v) {
      s.add("map" + std::to_string(v), random_array(rng, {cfg.map_height, cfg.map_width, c}, -1, 1));
    }
    cases.push_back({"anchor_featuring", s,
                     [near, cams](Tape& t, const ParamStore& p) {
                       std::vector<Var> maps;
                       for (std::size_t v = 0; v < cams.size(); ++v) maps.push_back(t.param(p, "map" + std::to_string(v)));
                       return project(afb::anchor_featuring(t, p, "afb", "camera", near, t.param(p, "F"), maps, cams));
                     },
                     400});
  }
  {
    ParamStore s(25);
    attention::add_attention_params(s, "self", c, cfg.heads);
    attention::add_attention_params(s, "cross", c, cfg.heads);
    s.add("F", random_array(rng, {m, c}, -1, 1));
    s.add("R", random_array(rng, {5, c}, -1, 1));
    std::vector<AnchorBox> received;
    for (std::size_t i = 0; i < 5; ++i) received.push_back(random_box(rng, 8.0));
    cases.push_back({"attention", s,
                     [anchors, received](Tape& t, const ParamStore& p) {
                       attention::AttentionOptions o;
                       o.heads = 2;
                       Var f = attention::sasa(t, p, "self", anchors, t.param(p, "F"), o);
                       f = attention::feed_forward(t, p, "self", f);
                       f = attention::saca(t, p, "cross", anchors, f, received, t.param(p, "R"), o);
                       return project(f);
                     },
                     400});
  }
  {
    ParamStore s(26);
    collab::add_confidence_params(s, "confidence", c);
    collab::add_encoder_params(s, "encoder", c);
    s.add("F", random_array(rng, {m, c}, -1, 1));
    collab::AnchorMessage msg;
    msg.sender = 1;
    msg.channels = static_cast<std::uint16_t>(c);
    for (std::size_t i = 0; i < 4; ++i) {
      // Received centers at ego anchor centers, so the envelope sum is non-empty.
      const AnchorBox b = anchors[i];
      msg.boxes.push_back({static_cast<float>(b.x), static_cast<float>(b.y), static_cast<float>(b.z),
                           static_cast<float>(b.h), static_cast<float>(b.w), static_cast<float>(b.l),
                           static_cast<float>(b.sin_theta), static_cast<float>(b.cos_theta)});
      msg.confidences.push_back(0.9f);
      for (std::size_t ch = 0; ch < c; ++ch) msg.features.push_back(static_cast<float>(rng.uniform(-1, 1)));
    }
    cases.push_back({"collaboration", s, [anchors, msg](Tape& t, const ParamStore& p) {
                       Var f = t.param(p, "F");
                       Var conf = collab::anchor_confidence_logits(t, p, "confidence", f);
                       const auto sel = collab::anchor_encoder(t, p, "encoder", RigidTransform::identity(), msg,
                                                               collab::Normalizer{16.0, 16.0});
                       return add(project(conf), project(collab::laaf(t, anchors, f, sel)));
                     }});
  }
  {
    ParamStore s(27);
    detector::add_head_params(s, "head", c);
    s.add("F", random_array(rng, {m, c}, -1, 1));
    std::vector<AnchorBox> gts;
    for (std::size_t i = 0; i < 3; ++i) gts.push_back(random_box(rng, 8.0));
    cases.push_back({"heads_and_set_loss", s, [anchors, gts](Tape& t, const ParamStore& p) {
                       const auto out = detector::decode_heads(t, p, "head", anchors, t.param(p, "F"), 16.0, 16.0);
                       const detector::LossWeights w;
                       const auto a = detector::hungarian_match(out.boxes.value(), out.logits.value(), gts, w);
                       return add(detector::set_loss(t, out, gts, a, w, 3.0), project(out.boxes));
                     }});
  }
  {
    Array targets({6, 1});
    for (std::size_t i = 0; i < 6; ++i) targets[i] = static_cast<double>(i % 2);
    cases.push_back({"focal_loss", store({{"x", random_array(rng, {6, 1}, -3, 3)}}),
                     [targets](Tape& t, const ParamStore& p) {
                       return detector::focal_loss(t.param(p, "x"), targets, detector::LossWeights{});
                     }});
  }
  {
    const Scene scene = generate_scene(cfg, 5);
    std::vector<afb::ViewFeatureStack> views;
    for (std::size_t a = 0; a < scene.agents(); ++a) views.push_back(render_feature_maps(scene, a, cfg));
    cases.push_back({"pipeline_single_layer", init_params(cfg),
                     [cfg, scene, views](Tape& t, const ParamStore& p) {
                       PipelineOptions o;
                       o.exact_wire = true;
                       const auto fr = forward(t, p, cfg, scene, views, o);
                       return pipeline_loss(t, cfg, scene, fr);
                     },
                     600});
  }
  return cases;
}

SuiteResult check_gradients(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult r{"gradients", true, "", 0};
  std::vector<std::string> failures;
  std::size_t checked = 0;
  double worst = 0;
  std::string worst_case;
  for (auto& gc : gradient_cases(seed)) {
    numeric::GradCheckOptions opt;
    opt.max_entries = gc.max_entries;
    opt.seed = seed;
    const auto rep = numeric::finite_diff_check(gc.loss, gc.params, opt);
    checked += rep.checked;
    if (rep.max_rel_error >= worst) {
      worst = rep.max_rel_error;
      worst_case = gc.name;
    }
    if (!rep.passed) failures.push_back(gc.name + " " + numeric::to_string(rep));
  }
  r.passed = failures.empty();
  std::ostringstream os;
  os << checked << " entries, worst rel error " << worst << " (" << worst_case << ")";
  r.detail = r.passed ? os.str() : join(failures);
  r.seconds = since(t0);
  return r;
}

SuiteResult check_attention(std::size_t draws, std::uint64_t seed) {
  const auto t0 = Clock::now();
  Rng rng(seed);
  SuiteResult r{"attention", true, "", 0};
  double max_diff = 0;

  // gamma = 0 against a plain loop implementation of pre-norm multi-head attention.
  for (std::size_t t = 0; t < 50; ++t) {
    const std::size_t heads = rng.bernoulli(0.5) ? 2 : 4, c = heads * (1 + rng.index(4)), m = 1 + rng.index(12);
    ParamStore s(rng.next());
    attention::add_attention_params(s, "att", c, heads);
    std::vector<AnchorBox> anchors;
    for (std::size_t i = 0; i < m; ++i) anchors.push_back(random_box(rng, 10.0));
    const Array f = random_array(rng, {m, c}, -2, 2);
    Tape tape;
    attention::AttentionOptions o;
    o.heads = heads;
    o.gamma = std::vector<double>(heads, 0.0);
    const Array got = attention::sasa(tape, s, "att", anchors, tape.constant(f), o).value();

    std::vector<std::vector<double>> x(m, std::vector<double>(c));
    for (std::size_t i = 0; i < m; ++i) {
      double mu = 0, var = 0;
      for (std::size_t j = 0; j < c; ++j) mu += f.at(i, j);
      mu /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) var += (f.at(i, j) - mu) * (f.at(i, j) - mu);
      var /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) x[i][j] = (f.at(i, j) - mu) / std::sqrt(var + 1e-5);
    }
    auto linear = [&](const std::string& name) {
      const Array& w = s.get(name + ".0.weight");
      const Array& b = s.get(name + ".0.bias");
      std::vector<std::vector<double>> y(m, std::vector<double>(c));
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t o2 = 0; o2 < c; ++o2) {
          double acc = b[o2];
          for (std::size_t j = 0; j < c; ++j) acc += x[i][j] * w.at(j, o2);
          y[i][o2] = acc;
        }
      }
      return y;
    };
    const auto q = linear("att.q"), k = linear("att.k"), v = linear("att.v");
    const std::size_t dh = c / heads;
    std::vector<std::vector<double>> cat(m, std::vector<double>(c, 0.0));
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> logits(m);
        double mx = -1e300;
        for (std::size_t j = 0; j < m; ++j) {
          double dot = 0;
          for (std::size_t d = 0; d < dh; ++d) dot += q[i][h * dh + d] * k[j][h * dh + d];
          logits[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, logits[j]);
        }
        double z = 0;
        for (auto& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t j = 0; j < m; ++j) {
          for (std::size_t d = 0; d < dh; ++d) cat[i][h * dh + d] += logits[j] / z * v[j][h * dh + d];
        }
      }
    }
    const Array& wo = s.get("att.o.0.weight");
    const Array& bo = s.get("att.o.0.bias");
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t o2 = 0; o2 < c; ++o2) {
        double acc = bo[o2];
        for (std::size_t j = 0; j < c; ++j) acc += cat[i][j] * wo.at(j, o2);
        max_diff = std::max(max_diff, std::abs(got.at(i, o2) - (f.at(i, o2) + acc)));
      }
    }
  }
  if (max_diff > 1e-9) {
    r.passed = false;
    r.detail = "gamma = 0 differs from plain attention by " + std::to_string(max_diff);
  }

  // Two keys with equal content: the nearer one wins by ((1 + d_far) / (1 + d_near))^gamma.
  double max_ratio_err = 0;
  const std::size_t c = 8, heads = 2;
  ParamStore s(seed);
  attention::add_attention_params(s, "att", c, heads);
  for (std::size_t t = 0; t < draws && r.passed; ++t) {
    const AnchorBox ego = random_box(rng, 20.0);
    const AnchorBox k1 = random_box(rng, 60.0), k2 = random_box(rng, 60.0);
    const double d1 = std::hypot(ego.x - k1.x, ego.y - k1.y), d2 = std::hypot(ego.x - k2.x, ego.y - k2.y);
    if (d1 == d2) continue;
    const Array f = random_array(rng, {1, c}, -1, 1);
    Array recv = random_array(rng, {1, c}, -1, 1);
    recv = Array({2, c}, [&] {
      std::vector<double> d(recv.vec());
      d.insert(d.end(), recv.vec().begin(), recv.vec().end());
      return d;
    }());
    std::vector<double> gamma{rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0)};
    std::vector<Array> weights;
    attention::AttentionOptions o;
    o.heads = heads;
    o.gamma = gamma;
    o.weights_out = &weights;
    Tape tape;
    attention::saca(tape, s, "att", {ego}, tape.constant(f), {k1, k2}, tape.constant(recv), o);
    for (std::size_t h = 0; h < heads; ++h) {
      const double w1 = weights[h][0], w2 = weights[h][1];
      const bool near_first = d1 < d2;
      const double wn = near_first ? w1 : w2, wf = near_first ? w2 : w1;
      const double dn = std::min(d1, d2), df = std::max(d1, d2);
      const double want = std::pow((1 + df) / (1 + dn), gamma[h]);
      max_ratio_err = std::max(max_ratio_err, std::abs(wn / wf - want) / want);
      if (!(wn > wf)) {
        r.passed = false;
        r.detail = "draw " + std::to_string(t) + ": nearer key did not receive more weight";
      }
    }
  }
  if (r.passed && max_ratio_err > 1e-9) {
    r.passed = false;
    r.detail = "two-key weight ratio off by " + std::to_string(max_ratio_err);
  }
  if (r.passed) {
    std::ostringstream os;
    os << "plain attention max diff " << max_diff << ", " << draws << " two-key draws, ratio rel error "
       << max_ratio_err;
    r.detail = os.str();
  }
  r.seconds = since(t0);
  return r;
}

SuiteResult check_protocol(std::uint64_t seed) {
  const auto t0 = Clock::now();
  Rng rng(seed);
  SuiteResult r{"protocol", true, "", 0};
  std::vector<std::string> errors;
  for (std::size_t ch : {16u, 32u, 64u}) {
    for (std::size_t count : {0u, 1u, 10u}) {
      std::vector<std::size_t> sizes;
      for (double range : {32.0, 153.6}) {
        std::vector<AnchorBox> anchors;
        for (std::size_t i = 0; i < 20; ++i) anchors.push_back(random_box(rng, range / 2));
        const Array f = random_array(rng, {20, ch}, -1, 1);
        std::vector<double> scores(20);
        for (auto& sc : scores) sc = rng.uniform(0.6, 1.0);
        auto msg = collab::build_message(3, 1, anchors, f, scores, std::max<std::size_t>(count, 1), 0.5);
        if (count == 0) {
          msg.boxes.clear();
          msg.confidences.clear();
          msg.features.clear();
        }
        const auto bytes = collab::encode_message(msg);
        const auto back = collab::decode_message(bytes);
        if (!(back == msg) || collab::encode_message(back) != bytes) {
          errors.push_back("round trip failed at K'=" + std::to_string(count) + " C=" + std::to_string(ch));
        }
        const std::size_t want = count * (9 + ch) * 4 + 16;
        if (bytes.size() != want || collab::message_bytes(count, ch) != want) {
          errors.push_back("size " + std::to_string(bytes.size()) + " != " + std::to_string(want));
        }
        sizes.push_back(bytes.size());
      }
      if (sizes[0] != sizes[1]) errors.push_back("message size depends on the detection range");
    }
  }
  const double base = collab::feature_map_bytes(153.6, 96.0, 0.4, 64);
  if (base != 23592960.0) errors.push_back("baseline " + std::to_string(base) + " != 23592960");
  if (collab::feature_map_bytes(307.2, 192.0, 0.4, 64) != 4 * base) errors.push_back("baseline not quadratic in range");
  const double ratio = static_cast<double>(collab::message_bytes(10, 64)) / base;
  if (!(ratio < 1e-3)) errors.push_back("ratio " + std::to_string(ratio) + " not below 1e-3");
  r.passed = errors.empty();
  std::ostringstream os;
  os << "baseline " << static_cast<std::uint64_t>(base) << " bytes, K'=10 ratio " << ratio;
  r.detail = r.passed ? os.str() : join(errors);
  r.seconds = since(t0);
  return r;
}

SuiteResult check_no_collaboration(const ExperimentConfig& cfg_in, std::size_t scenes) {
  const auto t0 = Clock::now();
  SuiteResult r{"no_collaboration", true, "", 0};
  ExperimentConfig cfg = cfg_in;
  cfg.agents = std::max<std::size_t>(cfg.agents, 2);
  if (cfg.fused_layers.empty()) cfg.fused_layers = {1};
  const ParamStore store = init_params(cfg);

  ParamStore gated = store;
  for (auto l : cfg.fused_layers) {
    const std::string p = layer_prefix(l - 1) + ".confidence";
    gated.fill(p, 0.0);
    gated.get_mut(p + "." + std::to_string(gated.mlp_depth(p) - 1) + ".bias")[0] = -50.0;
  }
  ExperimentConfig unfused = cfg;
  unfused.fused_layers.clear();

  auto same = [](const Detections& a, const Detections& b) {
    return a.boxes == b.boxes && a.confidences == b.confidences;
  };
  std::size_t differs_with_collab = 0;
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < scenes; ++i) {
    const Scene scene = generate_scene(cfg, 100 + i);
    std::vector<afb::ViewFeatureStack> views;
    for (std::size_t a = 0; a < scene.agents(); ++a) views.push_back(render_feature_maps(scene, a, cfg));
    auto run = [&](const ExperimentConfig& c, const ParamStore& s, const Scene& sc,
                   const std::vector<afb::ViewFeatureStack>& v, bool collaborate) {
      Tape tape;
      PipelineOptions o;
      o.collaborate = collaborate;
      const auto fr = forward(tape, s, c, sc, v, o);
      std::size_t sent = 0;
      for (const auto& rec : fr.bandwidth) sent += rec.anchors;
      return std::make_pair(ego_detections(c, fr), sent);
    };
    const auto reference = run(cfg, store, scene, views, false).first;

    Scene solo;
    solo.poses = {scene.poses[0]};
    solo.transforms = {{scene.transforms[0][0]}};
    solo.gts = scene.gts;
    solo.visible = {scene.visible[0]};
    ExperimentConfig one = cfg;
    one.agents = 1;
    if (!same(run(one, store, solo, {views[0]}, true).first, reference)) errors.push_back("N=1 differs");
    if (!same(run(unfused, store, scene, views, true).first, reference)) errors.push_back("empty fused set differs");
    const auto [gated_det, sent] = run(cfg, gated, scene, views, true);
    if (sent != 0) errors.push_back("gated agents still sent anchors");
    if (!same(gated_det, reference)) errors.push_back("below-threshold messages differ");
    if (!same(run(cfg, store, scene, views, true).first, reference)) ++differs_with_collab;
    if (!errors.empty()) break;
  }
  if (errors.empty() && differs_with_collab == 0) errors.push_back("control: collaboration never changed the output");
  r.passed = errors.empty();
  r.detail = r.passed ? std::to_string(scenes) + " scenes bit-identical; collaboration changed " +
                            std::to_string(differs_with_collab) + " of them"
                      : join(errors);
  r.seconds = since(t0);
  return r;
}

std::vector<SuiteResult> run_selftest() {
  return {check_hungarian(200, 1), check_laaf(100, 2), check_gradients(3), check_attention(1000, 4),
          check_protocol(5), check_no_collaboration(ExperimentConfig{}, 3)};
}

}  // namespace anchorfuse::sim
