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

#include "anchorfuse/sim/experiment.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>

#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/rng.hpp"

namespace anchorfuse::sim {

using numeric::Array;

namespace {

struct SceneInput {
  Scene scene;
  std::vector<afb::ViewFeatureStack> views;
};

SceneInput make_input(const ExperimentConfig& cfg, std::uint64_t seed) {
  SceneInput in{generate_scene(cfg, seed), {}};
  for (std::size_t a = 0; a < in.scene.agents(); ++a) in.views.push_back(render_feature_maps(in.scene, a, cfg));
  return in;
}

std::uint64_t train_scene_seed(const ExperimentConfig& cfg, std::size_t step, std::size_t b) {
  return scene_seed(cfg.seed, static_cast<std::uint64_t>(step) * cfg.batch_size + b);
}

std::size_t parse_count(const std::string& axis, const std::string& value) {
  std::size_t out = 0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("ablate " + axis + ": bad value '" + value + "'");
  return out;
}

}  // namespace

std::uint64_t scene_seed(std::uint64_t base, std::uint64_t index) {
  return numeric::Rng(base).fork(index).next();
}

double batch_loss(const ExperimentConfig& cfg, const ParamStore& store, std::size_t step) {
  double total = 0;
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    const SceneInput in = make_input(cfg, train_scene_seed(cfg, step, b));
    Tape tape;
    const ForwardResult fr = forward(tape, store, cfg, in.scene, in.views, {});
    total += pipeline_loss(tape, cfg, in.scene, fr).value().item();
  }
  return total / static_cast<double>(cfg.batch_size);
}

TrainResult train(const ExperimentConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  TrainResult result{options.init ? *options.init : init_params(cfg), {}};
  ParamStore& store = result.params;
  // A NaN weight can hide behind a ReLU and never reach the loss.
  for (const auto& name : store.names()) store.get(name).require_finite("initial parameter " + name);
  std::map<std::string, Array> velocity;
  for (const auto& name : store.names()) velocity.emplace(name, Array(store.get(name).shape()));
  if (options.loss_log) *options.loss_log << "# step loss grad_norm\n" << std::setprecision(17);

  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.train_steps; ++step) {
    std::map<std::string, Array> grads;
    double loss = 0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const SceneInput in = make_input(cfg, train_scene_seed(cfg, step, b));
      Tape tape;
      const ForwardResult fr = forward(tape, store, cfg, in.scene, in.views, {});
      Var l = pipeline_loss(tape, cfg, in.scene, fr);
      const double value = l.value().item();
      if (!std::isfinite(value)) {
        throw NumericalError("training diverged at step " + std::to_string(step) + ": loss is " +
                             std::to_string(value));
      }
      loss += value * inv_batch;
      auto g = tape.backward(l);
      for (auto& [name, arr] : g.params) {
        auto it = grads.find(name);
        if (it == grads.end()) {
          grads.emplace(name, std::move(arr));
        } else {
          for (std::size_t i = 0; i < arr.size(); ++i) it->second[i] += arr[i];
        }
      }
    }
    double sq = 0;
    for (auto& [name, g] : grads) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] *= inv_batch;
        sq += g[i] * g[i];
      }
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
      throw NumericalError("training diverged at step " + std::to_string(step) + ": gradient norm is " +
                           std::to_string(norm));
    }
    const double clip = (cfg.grad_clip > 0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;
    const double lr = cfg.cosine_decay ? cfg.learning_rate * 0.5 *
                                             (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                                             static_cast<double>(cfg.train_steps)))
                                       : cfg.learning_rate;
    for (auto& [name, g] : grads) {
      Array& v = velocity.at(name);
      Array& p = store.get_mut(name);
      for (std::size_t i = 0; i < g.size(); ++i) {
        v[i] = cfg.momentum * v[i] + clip * g[i];
        p[i] -= lr * v[i];
      }
    }
    result.losses.push_back(loss);
    if (options.loss_log) *options.loss_log << step << ' ' << loss << ' ' << norm << '\n';
    if (options.progress && (step % cfg.log_every == 0 || step + 1 == cfg.train_steps)) options.progress(step, loss);
  }
  return result;
}

EvalResult evaluate(const ExperimentConfig& cfg, const ParamStore& store, const PipelineOptions& options) {
  cfg.validate();
  EvalResult out;
  std::vector<detector::ScoredBox> pooled;
  std::vector<std::vector<AnchorBox>> gts;
  std::vector<collab::BandwidthRecord> records;
  for (std::size_t s = 0; s < cfg.eval_scenes; ++s) {
    const SceneInput in = make_input(cfg, scene_seed(cfg.eval_seed, s));
    Tape tape;
    const ForwardResult fr = forward(tape, store, cfg, in.scene, in.views, options);
    const Detections det = ego_detections(cfg, fr);
    auto scene_gts = agent_ground_truth(in.scene, 0, cfg);
    const auto vis = agent_ground_truth_visibility(in.scene, 0, cfg);

    std::vector<detector::ScoredBox> mine;
    for (std::size_t i = 0; i < det.boxes.size(); ++i) {
      mine.push_back({0, det.confidences[i], det.boxes[i]});
      pooled.push_back({s, det.confidences[i], det.boxes[i]});
      out.detections.push_back({s, 0, det.boxes[i], det.confidences[i]});
    }
    SceneMetrics m;
    m.scene = s;
    m.gts = scene_gts.size();
    for (auto v : vis) m.occluded += v ? 0 : 1;
    m.ap = detector::evaluate_ap(mine, {scene_gts}, out.thresholds);
    out.scenes.push_back(std::move(m));
    gts.push_back(std::move(scene_gts));
    for (const auto& r : fr.bandwidth) {
      out.bandwidth_rows.push_back({s, r});
      records.push_back(r);
    }
  }
  out.ap = detector::evaluate_ap(pooled, gts, out.thresholds);
  out.bandwidth = collab::bandwidth_report(std::move(records), cfg.range_x, cfg.range_y, cfg.bev_resolution,
                                           cfg.channels);
  return out;
}

std::vector<AblationRow> ablate(const ExperimentConfig& cfg, const ParamStore& store, const std::string& axis,
                                const std::vector<std::string>& values) {
  std::vector<AblationRow> rows;
  for (const auto& value : values) {
    ExperimentConfig c = cfg;
    PipelineOptions opt;
    if (axis == "K") {
      c.top_k = parse_count(axis, value);
    } else if (axis == "M") {
      c.anchors = parse_count(axis, value);
      c.top_k = std::min(c.top_k, c.anchors);
    } else if (axis == "N") {
      c.agents = parse_count(axis, value);
    } else if (axis == "component") {
      if (value == "none") {
        opt.collaborate = false;
      } else if (value == "no_laaf") {
        opt.laaf = false;
      } else if (value == "no_saca") {
        opt.saca = false;
      } else if (value == "no_location") {
        opt.location_encoding = false;
      } else if (value == "no_distance_bias") {
        opt.distance_bias = false;
      } else if (value != "full") {
        throw ConfigError("ablate component: unknown value '" + value + "'");
      }
    } else {
      throw ConfigError("unknown ablation axis '" + axis + "' (expected K, M, N or component)");
    }
    c.validate();
    const EvalResult r = evaluate(c, store, opt);
    AblationRow row{axis, value, r.ap, 0.0};
    if (!r.bandwidth.records.empty()) {
      row.mean_message_bytes =
          static_cast<double>(r.bandwidth.total_bytes) / static_cast<double>(r.bandwidth.records.size());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

bool interior_is_best(const std::vector<AblationRow>& rows) {
  if (rows.size() != 3) throw DimensionError("interior_is_best: expected a three-point sweep");
  const double mid = rows[1].ap.at(1);
  return mid >= rows[0].ap.at(1) && mid >= rows[2].ap.at(1);
}

void write_metrics_csv(std::ostream& out, const std::vector<std::pair<std::string, const EvalResult*>>& runs) {
  out << "mode,scene,gts,occluded,ap30,ap50,ap70\n" << std::setprecision(10);
  for (const auto& [mode, r] : runs) {
    for (const auto& m : r->scenes) {
      out << mode << ',' << m.scene << ',' << m.gts << ',' << m.occluded;
      for (double ap : m.ap) out << ',' << ap;
      out << '\n';
    }
  }
  for (const auto& [mode, r] : runs) {
    std::size_t gts = 0, occluded = 0;
    for (const auto& m : r->scenes) {
      gts += m.gts;
      occluded += m.occluded;
    }
    out << mode << ",all," << gts << ',' << occluded;
    for (double ap : r->ap) out << ',' << ap;
    out << '\n';
  }
}

void write_bandwidth_csv(std::ostream& out, const EvalResult& result) {
  out << "scene,agent,layer,anchors,bytes,baseline_bytes\n" << std::setprecision(17);
  for (const auto& row : result.bandwidth_rows) {
    out << row.scene << ',' << row.record.agent << ',' << row.record.layer + 1 << ',' << row.record.anchors << ','
        << row.record.bytes << ',' << result.bandwidth.baseline_bytes << '\n';
  }
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "axis,value,ap30,ap50,ap70,mean_message_bytes\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.axis << ',' << r.value;
    for (double ap : r.ap) out << ',' << ap;
    out << ',' << r.mean_message_bytes << '\n';
  }
}

}  // namespace anchorfuse::sim
