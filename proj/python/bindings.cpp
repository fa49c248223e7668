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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "anchorfuse/collab/collab.hpp"
#include "anchorfuse/detector/detector.hpp"
#include "anchorfuse/errors.hpp"
#include "anchorfuse/geometry/geometry.hpp"
#include "anchorfuse/sim/experiment.hpp"
#include "anchorfuse/sim/selftest.hpp"

namespace py = pybind11;
using namespace anchorfuse;
using geometry::AnchorBox;

namespace {

numeric::Array to_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  numeric::Shape shape(a.shape(), a.shape() + a.ndim());
  return numeric::Array(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_numpy(const numeric::Array& a) {
  py::array_t<double> out(a.shape());
  std::copy(a.data().begin(), a.data().end(), out.mutable_data());
  return out;
}

AnchorBox box_from(const std::vector<double>& p) {
  if (p.size() != 8) throw DimensionError("a box has 8 parameters (x y z h w l sin cos)");
  return AnchorBox::from_params(p);
}

py::dict message_dict(const collab::AnchorMessage& m) {
  py::dict d;
  d["sender"] = m.sender;
  d["layer"] = m.layer;
  d["channels"] = m.channels;
  d["boxes"] = m.boxes;
  d["confidences"] = m.confidences;
  d["features"] = m.features;
  return d;
}

collab::AnchorMessage message_from(const py::dict& d) {
  collab::AnchorMessage m;
  m.sender = d["sender"].cast<std::uint32_t>();
  m.layer = d["layer"].cast<std::uint16_t>();
  m.channels = d["channels"].cast<std::uint16_t>();
  m.boxes = d["boxes"].cast<std::vector<std::array<float, 8>>>();
  m.confidences = d["confidences"].cast<std::vector<float>>();
  m.features = d["features"].cast<std::vector<float>>();
  return m;
}

}  // namespace

PYBIND11_MODULE(_anchorfuse, m) {
  m.doc() = "Anchor-based collaborative 3D detection core";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<CodecError>(m, "CodecError", PyExc_ValueError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_ValueError);

  py::class_<sim::ExperimentConfig>(m, "Config")
      .def(py::init<>())
      .def_static("parse", &sim::parse_config, py::arg("text"))
      .def_static("load", [](const std::string& path) { return sim::load_config(path); }, py::arg("path"))
      .def("to_text", [](const sim::ExperimentConfig& c) { return sim::to_text(c); })
      .def("set", [](sim::ExperimentConfig& c, const std::string& k, const std::string& v) { sim::set_option(c, k, v); })
      .def("validate", &sim::ExperimentConfig::validate)
      .def_readwrite("anchors", &sim::ExperimentConfig::anchors)
      .def_readwrite("channels", &sim::ExperimentConfig::channels)
      .def_readwrite("heads", &sim::ExperimentConfig::heads)
      .def_readwrite("layers", &sim::ExperimentConfig::layers)
      .def_readwrite("fused_layers", &sim::ExperimentConfig::fused_layers)
      .def_readwrite("top_k", &sim::ExperimentConfig::top_k)
      .def_readwrite("tau", &sim::ExperimentConfig::tau)
      .def_readwrite("agents", &sim::ExperimentConfig::agents)
      .def_readwrite("max_gts", &sim::ExperimentConfig::max_gts)
      .def_readwrite("seed", &sim::ExperimentConfig::seed)
      .def_readwrite("train_steps", &sim::ExperimentConfig::train_steps)
      .def_readwrite("batch_size", &sim::ExperimentConfig::batch_size)
      .def_readwrite("learning_rate", &sim::ExperimentConfig::learning_rate)
      .def_readwrite("eval_scenes", &sim::ExperimentConfig::eval_scenes)
      .def_readwrite("eval_seed", &sim::ExperimentConfig::eval_seed);

  py::class_<numeric::ParamStore>(m, "ParamStore")
      .def("names", &numeric::ParamStore::names)
      .def("count", &numeric::ParamStore::count)
      .def("get", [](const numeric::ParamStore& s, const std::string& n) { return to_numpy(s.get(n)); })
      .def("save", [](const numeric::ParamStore& s, const std::string& path) { s.save(std::filesystem::path(path)); })
      .def_static("load", [](const std::string& path) { return numeric::ParamStore::load(std::filesystem::path(path)); })
      .def("__eq__", [](const numeric::ParamStore& a, const numeric::ParamStore& b) { return a == b; });

  m.def("init_params", &sim::init_params, py::arg("config"));

  m.def(
      "solve_assignment",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cost) {
        const auto a = detector::solve_assignment(to_array(cost));
        return py::make_tuple(a.pred_of_gt, a.cost);
      },
      py::arg("cost"), "Minimum-cost assignment of every row to a distinct column; returns (columns, cost).");

  m.def(
      "bev_iou", [](const std::vector<double>& a, const std::vector<double>& b) { return geometry::bev_iou(box_from(a), box_from(b)); },
      py::arg("a"), py::arg("b"));

  m.def(
      "evaluate_ap",
      [](const std::vector<std::tuple<std::size_t, double, std::vector<double>>>& preds,
         const std::vector<std::vector<std::vector<double>>>& gts, const std::vector<double>& thresholds) {
        std::vector<detector::ScoredBox> p;
        for (const auto& [scene, conf, box] : preds) p.push_back({scene, conf, box_from(box)});
        std::vector<std::vector<AnchorBox>> g;
        for (const auto& scene : gts) {
          g.emplace_back();
          for (const auto& b : scene) g.back().push_back(box_from(b));
        }
        return detector::evaluate_ap(p, g, thresholds);
      },
      py::arg("predictions"), py::arg("ground_truth"), py::arg("thresholds") = std::vector<double>{0.3, 0.5, 0.7},
      "predictions: (scene, confidence, box) tuples; ground_truth: per scene list of boxes.");

  m.def("message_bytes", &collab::message_bytes, py::arg("count"), py::arg("channels"));
  m.def("feature_map_bytes", &collab::feature_map_bytes, py::arg("range_x"), py::arg("range_y"),
        py::arg("resolution"), py::arg("channels"));
  m.def(
      "encode_message",
      [](const py::dict& d) {
        const auto bytes = collab::encode_message(message_from(d));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("message"));
  m.def(
      "decode_message",
      [](const py::bytes& b) {
        const std::string s = b;
        return message_dict(collab::decode_message(
            std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
      },
      py::arg("data"));

  m.def(
      "train",
      [](const sim::ExperimentConfig& cfg) {
        auto r = sim::train(cfg);
        return py::make_tuple(std::move(r.params), r.losses);
      },
      py::arg("config"), "Returns (params, per-step losses).");
  m.def(
      "evaluate",
      [](const sim::ExperimentConfig& cfg, const numeric::ParamStore& store, bool collaborate) {
        sim::PipelineOptions o;
        o.collaborate = collaborate;
        const auto r = sim::evaluate(cfg, store, o);
        py::dict d;
        d["ap"] = r.ap;
        d["total_bytes"] = r.bandwidth.total_bytes;
        d["ratio"] = r.bandwidth.ratio;
        d["detections"] = r.detections.size();
        return d;
      },
      py::arg("config"), py::arg("params"), py::arg("collaborate") = true);

  m.def("selftest", [] {
    py::list out;
    for (const auto& r : sim::run_selftest()) {
      py::dict d;
      d["name"] = r.name;
      d["passed"] = r.passed;
      d["detail"] = r.detail;
      out.append(d);
    }
    return out;
  });
}
