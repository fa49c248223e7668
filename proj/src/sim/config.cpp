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

#include "anchorfuse/sim/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "anchorfuse/errors.hpp"

namespace anchorfuse::sim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "': cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("'" + key + "': expected true/false, got '" + value + "'");
}

std::set<std::size_t> parse_set(const std::string& key, const std::string& value) {
  std::set<std::size_t> out;
  if (value.empty() || value == "none") return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.insert(parse_number<std::size_t>(key, trim(item)));
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field size_field(T ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<T>(k, v);
          },
          [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(double ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<double>(k, v);
          },
          [member](const ExperimentConfig& c) { return fmt(c.*member); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"anchors", size_field(&ExperimentConfig::anchors)},
      {"channels", size_field(&ExperimentConfig::channels)},
      {"heads", size_field(&ExperimentConfig::heads)},
      {"learnable_points", size_field(&ExperimentConfig::learnable_points)},
      {"layers", size_field(&ExperimentConfig::layers)},
      {"fused_layers",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.fused_layers = parse_set(k, v); },
        [](const ExperimentConfig& c) {
          if (c.fused_layers.empty()) return std::string("none");
          std::string s;
          for (auto l : c.fused_layers) s += (s.empty() ? "" : ",") + std::to_string(l);
          return s;
        }}},
      {"top_k", size_field(&ExperimentConfig::top_k)},
      {"tau", real_field(&ExperimentConfig::tau)},
      {"min_anchor_size", real_field(&ExperimentConfig::min_anchor_size)},
      {"anchor_seed", size_field(&ExperimentConfig::anchor_seed)},
      {"agents", size_field(&ExperimentConfig::agents)},
      {"range_x", real_field(&ExperimentConfig::range_x)},
      {"range_y", real_field(&ExperimentConfig::range_y)},
      {"occlusion_heavy",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.occlusion_heavy = parse_bool(k, v); },
        [](const ExperimentConfig& c) { return std::string(c.occlusion_heavy ? "true" : "false"); }}},
      {"min_gts", size_field(&ExperimentConfig::min_gts)},
      {"max_gts", size_field(&ExperimentConfig::max_gts)},
      {"views", size_field(&ExperimentConfig::views)},
      {"map_height", size_field(&ExperimentConfig::map_height)},
      {"map_width", size_field(&ExperimentConfig::map_width)},
      {"camera_height", real_field(&ExperimentConfig::camera_height)},
      {"focal", real_field(&ExperimentConfig::focal)},
      {"blob_sigma", real_field(&ExperimentConfig::blob_sigma)},
      {"seed", size_field(&ExperimentConfig::seed)},
      {"train_steps", size_field(&ExperimentConfig::train_steps)},
      {"batch_size", size_field(&ExperimentConfig::batch_size)},
      {"learning_rate", real_field(&ExperimentConfig::learning_rate)},
      {"momentum", real_field(&ExperimentConfig::momentum)},
      {"cosine_decay",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.cosine_decay = parse_bool(k, v); },
        [](const ExperimentConfig& c) { return std::string(c.cosine_decay ? "true" : "false"); }}},
      {"grad_clip", real_field(&ExperimentConfig::grad_clip)},
      {"log_every", size_field(&ExperimentConfig::log_every)},
      {"eval_seed", size_field(&ExperimentConfig::eval_seed)},
      {"eval_scenes", size_field(&ExperimentConfig::eval_scenes)},
      {"bev_resolution", real_field(&ExperimentConfig::bev_resolution)},
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(anchors >= 1, "anchors must be >= 1");
  require(channels >= 1, "channels must be >= 1");
  require(heads >= 1 && channels % heads == 0, "heads must divide channels");
  require(layers >= 1, "layers must be >= 1");
  for (auto l : fused_layers) require(l >= 1 && l <= layers, "fused layer " + std::to_string(l) + " outside 1..layers");
  require(top_k >= 1 && top_k <= anchors, "top_k must be in 1..anchors");
  require(tau >= 0 && tau <= 1, "tau must be in [0,1]");
  require(min_anchor_size > 0, "min_anchor_size must be positive");
  require(agents >= 1, "agents must be >= 1");
  require(range_x > 0 && range_y > 0, "detection range must be positive");
  require(min_gts >= 1 && min_gts <= max_gts, "need 1 <= min_gts <= max_gts");
  require(max_gts <= anchors, "max_gts must not exceed anchors (each gt needs its own anchor)");
  require(views >= 1 && map_height >= 1 && map_width >= 1, "sensor extents must be positive");
  require(camera_height > 0 && focal > 0 && blob_sigma > 0, "camera_height, focal and blob_sigma must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate >= 0, "learning_rate must be >= 0");
  require(momentum >= 0 && momentum < 1, "momentum must be in [0,1)");
  require(grad_clip >= 0, "grad_clip must be >= 0");
  require(log_every >= 1, "log_every must be >= 1");
  require(eval_scenes >= 1, "eval_scenes must be >= 1");
  require(bev_resolution > 0, "bev_resolution must be positive");
}

void set_option(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool saw_version = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "version") {
        const int v = parse_number<int>(key, value);
        if (v != kConfigVersion) throw ConfigError("unsupported config version " + value);
        saw_version = true;
      } else {
        set_option(cfg, key, value);
      }
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!saw_version) throw ConfigError("missing 'version' key");
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& cfg) {
  std::string out = "version = " + std::to_string(kConfigVersion) + "\n";
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace anchorfuse::sim
