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

// anchorfuse: train, evaluate and inspect the collaborative detector.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "anchorfuse/errors.hpp"
#include "anchorfuse/sim/experiment.hpp"
#include "anchorfuse/sim/selftest.hpp"

namespace fs = std::filesystem;
using namespace anchorfuse;

namespace {

constexpr int kOk = 0, kUsage = 1, kConfig = 2, kNumerical = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::vector<std::string> overrides;
};

sim::ExperimentConfig load(const Common& c) {
  sim::ExperimentConfig cfg = c.config.empty() ? sim::ExperimentConfig{} : sim::load_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    sim::set_option(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void print_ap(const std::string& mode, const std::vector<double>& ap) {
  std::cout << std::left << std::setw(14) << mode << std::right << std::fixed << std::setprecision(4);
  for (double v : ap) std::cout << std::setw(10) << v;
  std::cout << '\n' << std::defaultfloat;
}

int run_train(const Common& c) {
  const auto cfg = load(c);
  const fs::path dir = c.out;
  auto log = open_out(dir / "loss.log");
  sim::TrainOptions opt;
  opt.loss_log = &log;
  const auto t0 = std::chrono::steady_clock::now();
  opt.progress = [&](std::size_t step, double loss) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream line;
    line << "step " << step << "  loss " << loss << "  (" << std::fixed << std::setprecision(1) << s << " s)\n";
    std::cerr << line.str();
  };
  const auto result = sim::train(cfg, opt);
  result.params.save(dir / "checkpoint.bin");
  open_out(dir / "config.cfg") << sim::to_text(cfg);
  std::cout << "steps        " << result.losses.size() << '\n'
            << "loss_first   " << result.losses.front() << '\n'
            << "loss_last    " << result.losses.back() << '\n'
            << "checkpoint   " << (dir / "checkpoint.bin").string() << '\n';
  return kOk;
}

numeric::ParamStore load_checkpoint(const Common& c, const std::string& path) {
  const fs::path p = path.empty() ? fs::path(c.out) / "checkpoint.bin" : fs::path(path);
  return numeric::ParamStore::load(p);
}

int run_eval(const Common& c, const std::string& checkpoint) {
  const auto cfg = load(c);
  const auto store = load_checkpoint(c, checkpoint);
  sim::PipelineOptions solo;
  solo.collaborate = false;
  const auto collab = sim::evaluate(cfg, store, {});
  const auto single = sim::evaluate(cfg, store, solo);
  const fs::path dir = c.out;
  {
    auto out = open_out(dir / "metrics.csv");
    sim::write_metrics_csv(out, {{"collab", &collab}, {"single", &single}});
  }
  {
    auto out = open_out(dir / "bandwidth.csv");
    sim::write_bandwidth_csv(out, collab);
  }
  {
    auto out = open_out(dir / "detections.txt");
    detector::write_detections(out, collab.detections);
  }
  std::cout << std::left << std::setw(14) << "mode" << std::right << std::setw(10) << "AP@0.3" << std::setw(10)
            << "AP@0.5" << std::setw(10) << "AP@0.7" << '\n';
  print_ap("collab", collab.ap);
  print_ap("single", single.ap);
  std::cout << "gain@0.5      " << std::fixed << std::setprecision(4) << collab.ap[1] - single.ap[1] << '\n'
            << std::defaultfloat << "mean_bytes    "
            << (collab.bandwidth.records.empty()
                    ? 0.0
                    : static_cast<double>(collab.bandwidth.total_bytes) / collab.bandwidth.records.size())
            << '\n'
            << "ratio         " << collab.bandwidth.ratio << '\n';
  return kOk;
}

int run_bandwidth(const Common& c, const std::string& range, std::optional<std::size_t> channels) {
  auto cfg = load(c);
  if (!range.empty()) {
    const auto x = range.find('x');
    if (x == std::string::npos) throw CLI::ValidationError("--range", "expected <x>x<y>, e.g. 153.6x96");
    try {
      cfg.range_x = std::stod(range.substr(0, x));
      cfg.range_y = std::stod(range.substr(x + 1));
    } catch (const std::exception&) {
      throw CLI::ValidationError("--range", "expected <x>x<y>, e.g. 153.6x96");
    }
  }
  if (channels) cfg.channels = *channels;
  const double base = collab::feature_map_bytes(cfg.range_x, cfg.range_y, cfg.bev_resolution, cfg.channels);
  auto out = open_out(fs::path(c.out) / "bandwidth.csv");
  out << "anchors,message_bytes,baseline_bytes,ratio\n" << std::setprecision(17);
  std::cout << "range          " << cfg.range_x << " x " << cfg.range_y << " m\n"
            << "resolution     " << cfg.bev_resolution << " m/px\n"
            << "channels       " << cfg.channels << '\n'
            << "baseline_bytes " << std::fixed << std::setprecision(0) << base << std::defaultfloat << '\n'
            << std::left << std::setw(10) << "anchors" << std::setw(16) << "message_bytes" << "ratio\n";
  for (std::size_t k : {std::size_t{0}, std::size_t{1}, std::size_t{5}, cfg.top_k, std::size_t{15}, cfg.anchors}) {
    const auto bytes = collab::message_bytes(k, cfg.channels);
    out << k << ',' << bytes << ',' << base << ',' << bytes / base << '\n';
    std::cout << std::setw(10) << k << std::setw(16) << bytes << bytes / base << '\n';
  }
  return kOk;
}

int run_ablate(const Common& c, const std::string& checkpoint, const std::string& axis,
               const std::vector<std::string>& values) {
  const auto cfg = load(c);
  const auto store = load_checkpoint(c, checkpoint);
  const auto rows = sim::ablate(cfg, store, axis, values);
  auto out = open_out(fs::path(c.out) / ("ablation_" + axis + ".csv"));
  sim::write_ablation_csv(out, rows);
  std::cout << std::left << std::setw(14) << axis << std::right << std::setw(10) << "AP@0.3" << std::setw(10)
            << "AP@0.5" << std::setw(10) << "AP@0.7" << std::setw(12) << "bytes" << '\n';
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(14) << r.value << std::right << std::fixed << std::setprecision(4);
    for (double v : r.ap) std::cout << std::setw(10) << v;
    std::cout << std::setw(12) << std::setprecision(1) << r.mean_message_bytes << '\n' << std::defaultfloat;
  }
  if (axis == "K" && rows.size() == 3) {
    std::cout << (sim::interior_is_best(rows) ? "interior K is best at AP@0.5\n"
                                              : "deviation: interior K is not best at AP@0.5\n");
  }
  return kOk;
}

int run_selftest() {
  bool ok = true;
  for (const auto& r : sim::run_selftest()) {
    ok = ok && r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(18) << r.name << std::right << std::fixed
              << std::setprecision(2) << std::setw(8) << r.seconds << " s  " << std::defaultfloat << r.detail << '\n';
  }
  return ok ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anchor-based collaborative 3D detection on synthetic scenes"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config, "Config file (key = value, versioned)");
  app.add_option("--seed", common.seed, "Overrides the config seed");
  app.add_option("--out", common.out, "Output directory")->capture_default_str();
  app.add_option("--set", common.overrides, "Config override key=value (repeatable)");

  std::string checkpoint, range, axis;
  std::optional<std::size_t> channels;
  std::vector<std::string> values;
  auto* train = app.add_subcommand("train", "Train on generated scenes; writes checkpoint.bin and loss.log");
  auto* eval = app.add_subcommand("eval", "Collaborative vs single-agent AP; writes metrics.csv, bandwidth.csv, "
                                          "detections.txt");
  eval->add_option("--checkpoint", checkpoint, "Defaults to <out>/checkpoint.bin");
  auto* bw = app.add_subcommand("bandwidth", "Message size against a dense BEV feature map");
  bw->add_option("--range", range, "Detection range <x>x<y> in meters, e.g. 153.6x96");
  bw->add_option("--channels", channels, "Feature width");
  auto* abl = app.add_subcommand("ablate", "Re-evaluate a trained model along one axis");
  abl->add_option("--checkpoint", checkpoint, "Defaults to <out>/checkpoint.bin");
  abl->add_option("--axis", axis, "K, M, N or component")->required();
  abl->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
  auto* self = app.add_subcommand("selftest", "Run the oracle suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*train) return run_train(common);
    if (*eval) return run_eval(common, checkpoint);
    if (*bw) return run_bandwidth(common, range, channels);
    if (*abl) return run_ablate(common, checkpoint, axis, values);
    if (*self) return run_selftest();
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const CodecError& e) {
    std::cerr << "bad checkpoint: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
