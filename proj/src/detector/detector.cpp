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

#include "anchorfuse/detector/detector.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/compose.hpp"

namespace anchorfuse::detector {

using namespace numeric;

void add_head_params(ParamStore& store, const std::string& prefix, std::size_t channels) {
  store.add_mlp(prefix + ".cls", {channels, channels, 1});
  store.add_mlp(prefix + ".reg", {channels + 8, 2 * channels, 8});
}

HeadOutput decode_heads(Tape& tape, const ParamStore& store, const std::string& prefix,
                        const std::vector<AnchorBox>& anchors, Var features, double half_x, double half_y) {
  HeadOutput out;
  out.logits = mlp_forward(tape, store, prefix + ".cls", features);
  Var input = concat({features, tape.constant(geometry::normalized_boxes(anchors, half_x, half_y))}, 1);
  Var raw = add(tape.constant(geometry::boxes_to_array(anchors)), mlp_forward(tape, store, prefix + ".reg", input));
  Var s = slice_cols(raw, 6, 7);
  Var c = slice_cols(raw, 7, 8);
  Var inv_norm = exp(scale(log(add_scalar(add(square(s), square(c)), 1e-12)), -0.5));
  out.boxes = concat({slice_cols(raw, 0, 6), mul(s, inv_norm), mul(c, inv_norm)}, 1);
  return out;
}

std::vector<AnchorBox> refine_anchors(const Array& boxes, double min_size) {
  if (boxes.rank() != 2 || boxes.dim(1) != 8) throw DimensionError("refine_anchors: expected [M,8]");
  std::vector<AnchorBox> out;
  out.reserve(boxes.dim(0));
  for (std::size_t i = 0; i < boxes.dim(0); ++i) {
    auto at = [&](std::size_t c) { return boxes.at(i, c); };
    out.push_back(AnchorBox::make(at(0), at(1), at(2), std::max(at(3), min_size), std::max(at(4), min_size),
                                  std::max(at(5), min_size), at(6), at(7)));
  }
  return out;
}

std::vector<Prediction> predictions(const HeadOutput& out, std::size_t layer, double min_size) {
  const auto boxes = refine_anchors(out.boxes.value(), min_size);
  std::vector<Prediction> preds;
  for (std::size_t i = 0; i < boxes.size(); ++i) preds.push_back({boxes[i], out.logits.value()[i], layer});
  return preds;
}

Assignment solve_assignment(const Array& cost) {
  if (cost.rank() != 2) throw DimensionError("solve_assignment: cost must be rank 2");
  const std::size_t n = cost.dim(0), m = cost.dim(1);
  if (n > m) {
    throw InfeasibleError("assignment infeasible: " + std::to_string(n) + " ground truths but only " +
                          std::to_string(m) + " predictions");
  }
  Assignment result;
  if (n == 0) return result;
  // Shortest augmenting paths with row/column potentials; 1-based with
  // column 0 as the virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  result.pred_of_gt.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) result.pred_of_gt[p[j] - 1] = j - 1;
  }
  for (std::size_t i = 0; i < n; ++i) result.cost += cost.at(i, result.pred_of_gt[i]);
  return result;
}

namespace {

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

}  // namespace

double focal_cost(double logit, const LossWeights& w) {
  const double lp = log_sigmoid(logit), ln = log_sigmoid(-logit);
  const double pos = -w.alpha * std::exp(w.gamma * ln) * lp;
  const double neg = -(1 - w.alpha) * std::exp(w.gamma * lp) * ln;
  return pos - neg;
}

Array matching_cost(const Array& pred_boxes, const Array& logits, const std::vector<AnchorBox>& gts,
                    const LossWeights& w) {
  const std::size_t m = pred_boxes.dim(0);
  if (pred_boxes.rank() != 2 || pred_boxes.dim(1) != 8 || logits.size() != m) {
    throw DimensionError("matching_cost: expected [M,8] boxes and M logits");
  }
  Array cost({gts.size(), m});
  for (std::size_t j = 0; j < m; ++j) {
    const double cls = w.cls * focal_cost(logits[j], w);
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const auto gp = gts[g].params();
      double l1 = 0;
      for (std::size_t q = 0; q < 8; ++q) l1 += std::abs(pred_boxes.at(j, q) - gp[q]);
      cost.at(g, j) = cls + w.reg * l1;
    }
  }
  return cost;
}

Assignment hungarian_match(const Array& pred_boxes, const Array& logits, const std::vector<AnchorBox>& gts,
                           const LossWeights& w) {
  return solve_assignment(matching_cost(pred_boxes, logits, gts, w));
}

Var focal_loss(Var logits, const Array& targets, const LossWeights& w) {
  if (logits.value().size() != targets.size()) throw DimensionError("focal_loss: target count");
  Tape& tape = logits.tape();
  const Array t = targets.reshaped(logits.shape());
  Array pos_coef(t.shape()), neg_coef(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    pos_coef[i] = -w.alpha * t[i];
    neg_coef[i] = -(1 - w.alpha) * (1 - t[i]);
  }
  Var lp = log_sigmoid(logits);
  Var ln = log_sigmoid(neg(logits));
  Var pos = mul(exp(scale(ln, w.gamma)), lp);
  Var negt = mul(exp(scale(lp, w.gamma)), ln);
  return sum(add(mul(pos, tape.constant(std::move(pos_coef))), mul(negt, tape.constant(std::move(neg_coef)))));
}

Var set_loss(Tape& tape, const HeadOutput& out, const std::vector<AnchorBox>& gts,
             const Assignment& assignment, const LossWeights& w, double normalizer) {
  const std::size_t m = out.logits.value().size();
  if (assignment.pred_of_gt.size() != gts.size()) throw DimensionError("set_loss: assignment size");
  Array targets({m, 1});
  for (std::size_t j : assignment.pred_of_gt) targets[j] = 1.0;
  Var loss = scale(focal_loss(out.logits, targets, w), w.cls);
  if (!gts.empty()) {
    Var matched = take_rows(out.boxes, assignment.pred_of_gt);
    Var l1 = sum(abs(sub(matched, tape.constant(geometry::boxes_to_array(gts)))));
    loss = add(loss, scale(l1, w.reg));
  }
  return scale(loss, 1.0 / normalizer);
}

std::vector<double> evaluate_ap(const std::vector<ScoredBox>& preds,
                                const std::vector<std::vector<AnchorBox>>& gts,
                                const std::vector<double>& thresholds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });
  std::size_t total_gt = 0;
  for (const auto& g : gts) total_gt += g.size();

  std::vector<double> result;
  for (double thr : thresholds) {
    std::vector<std::vector<char>> used(gts.size());
    for (std::size_t s = 0; s < gts.size(); ++s) used[s].assign(gts[s].size(), 0);
    std::vector<double> precision, recall;
    std::size_t tp = 0, seen = 0;
    for (std::size_t idx : order) {
      const auto& p = preds[idx];
      ++seen;
      if (p.scene < gts.size()) {
        double best = thr;
        long best_gt = -1;
        for (std::size_t g = 0; g < gts[p.scene].size(); ++g) {
          if (used[p.scene][g]) continue;
          const double iou = geometry::bev_iou(p.box, gts[p.scene][g]);
          if (iou >= best) {
            best = iou;
            best_gt = static_cast<long>(g);
          }
        }
        if (best_gt >= 0) {
          used[p.scene][static_cast<std::size_t>(best_gt)] = 1;
          ++tp;
        }
      }
      precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
      recall.push_back(total_gt ? static_cast<double>(tp) / static_cast<double>(total_gt) : 0.0);
    }
    double ap = 0;
    if (total_gt > 0) {
      for (int k = 0; k <= 10; ++k) {
        const double r = k / 10.0;
        double best = 0;
        for (std::size_t i = 0; i < precision.size(); ++i) {
          if (recall[i] >= r - 1e-12) best = std::max(best, precision[i]);
        }
        ap += best / 11.0;
      }
    }
    result.push_back(ap);
  }
  return result;
}

void write_detections(std::ostream& out, const std::vector<DetectionRecord>& records) {
  out << "# scene agent x y z h w l sin cos confidence\n";
  std::ostringstream line;
  for (const auto& r : records) {
    line.str("");
    line << std::setprecision(9) << r.scene << ' ' << r.agent;
    for (double v : r.box.params()) line << ' ' << v;
    line << ' ' << r.confidence << '\n';
    out << line.str();
  }
}

std::vector<DetectionRecord> read_detections(std::istream& in) {
  std::vector<DetectionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    DetectionRecord r;
    std::array<double, 8> p{};
    is >> r.scene >> r.agent;
    for (double& v : p) is >> v;
    is >> r.confidence;
    if (!is) throw std::runtime_error("malformed detection line: " + line);
    r.box = AnchorBox::from_params(p);
    out.push_back(r);
  }
  return out;
}

}  // namespace anchorfuse::detector
