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

#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "anchorfuse/numeric/params.hpp"
#include "anchorfuse/numeric/tape.hpp"

namespace anchorfuse::numeric {

/// Scalar function of a parameter store, traced on the given tape.
using LossFn = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  /// Entries to probe; 0 probes all of them. Values below 64 are raised to 64.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
  /// Denominator floor for the relative error, so entries whose true gradient
  /// is ~0 are judged by absolute error instead.
  double floor = 1e-6;
  /// Hook applied to the analytic gradients before comparison (negative
  /// controls use it to inject a wrong gradient).
  std::function<void(Gradients&)> corrupt;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

/// Compares backward() against central differences of `fn`.
GradCheckReport finite_diff_check(const LossFn& fn, const ParamStore& params,
                                  const GradCheckOptions& options = {});

std::string to_string(const GradCheckReport& report);

}  // namespace anchorfuse::numeric
