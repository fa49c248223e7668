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

#include "anchorfuse/numeric/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/rng.hpp"

namespace anchorfuse::numeric {

namespace {

double evaluate(const LossFn& fn, const ParamStore& params) {
  Tape tape(true);
  Var out = fn(tape, params);
  if (out.value().size() != 1) throw DimensionError("finite_diff_check: loss is not a scalar");
  return out.value()[0];
}

}  // namespace

GradCheckReport finite_diff_check(const LossFn& fn, const ParamStore& params,
                                  const GradCheckOptions& options) {
  Gradients grads;
  {
    Tape tape(true);
    Var out = fn(tape, params);
    grads = tape.backward(out);
  }
  if (options.corrupt) options.corrupt(grads);

  std::vector<std::pair<std::size_t, std::size_t>> entries;  // (tensor, flat index)
  for (std::size_t t = 0; t < params.size(); ++t) {
    const std::size_t n = params.get(params.names()[t]).size();
    for (std::size_t i = 0; i < n; ++i) entries.emplace_back(t, i);
  }
  if (options.max_entries != 0) {
    const std::size_t want = std::max<std::size_t>(options.max_entries, 64);
    if (entries.size() > want) {
      Rng rng(options.seed);
      for (std::size_t i = 0; i < want; ++i) {
        std::swap(entries[i], entries[i + rng.index(entries.size() - i)]);
      }
      entries.resize(want);
      std::sort(entries.begin(), entries.end());
    }
  }

  GradCheckReport report;
  ParamStore probe = params;
  for (const auto& [t, i] : entries) {
    const std::string& name = params.names()[t];
    double& slot = probe.get_mut(name)[i];
    const double original = slot;
    slot = original + options.step;
    const double up = evaluate(fn, probe);
    slot = original - options.step;
    const double down = evaluate(fn, probe);
    slot = original;

    const double numeric = (up - down) / (2.0 * options.step);
    const double analytic = grads.at(name)[i];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), options.floor});
    const double rel = std::abs(numeric - analytic) / denom;
    ++report.checked;
    if (rel > report.max_rel_error || report.checked == 1) {
      report.max_rel_error = rel;
      report.worst_param = name;
      report.worst_index = i;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_rel_error <= options.tol;
  return report;
}

std::string to_string(const GradCheckReport& report) {
  std::ostringstream os;
  os << (report.passed ? "pass" : "FAIL") << ": " << report.checked
     << " entries, max rel error " << report.max_rel_error;
  if (!report.worst_param.empty()) {
    os << " at " << report.worst_param << "[" << report.worst_index
       << "] (analytic " << report.worst_analytic << ", numeric " << report.worst_numeric << ")";
  }
  return os.str();
}

}  // namespace anchorfuse::numeric
