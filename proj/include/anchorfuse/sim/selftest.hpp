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

// Oracle suites shared by the `selftest` subcommand and the acceptance run.
// Each compares a component against an independent reference.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anchorfuse/numeric/gradcheck.hpp"
#include "anchorfuse/sim/config.hpp"

namespace anchorfuse::sim {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

/// Assignment cost against brute-force enumeration on random matrices of up
/// to 7x7 (rows <= cols).
SuiteResult check_hungarian(std::size_t trials, std::uint64_t seed);

/// laaf against the containment double loop, bit for bit.
SuiteResult check_laaf(std::size_t trials, std::uint64_t seed);

/// One named finite-difference case.
struct GradCase {
  std::string name;
  numeric::ParamStore params;
  numeric::LossFn loss;
  std::size_t max_entries = 0;
};
/// Every traced op and module plus the single-layer pipeline loss.
std::vector<GradCase> gradient_cases(std::uint64_t seed);
SuiteResult check_gradients(std::uint64_t seed);

/// gamma = 0 against plain multi-head attention, and the two-key distance
/// ordering with gamma > 0.
SuiteResult check_attention(std::size_t draws, std::uint64_t seed);

/// Codec round trip, message sizes and the dense-map baseline.
SuiteResult check_protocol(std::uint64_t seed);

/// One agent, no fused layers, and fully gated messages all give the
/// no-collaboration ego detections.
SuiteResult check_no_collaboration(const ExperimentConfig& cfg, std::size_t scenes);

std::vector<SuiteResult> run_selftest();

}  // namespace anchorfuse::sim
