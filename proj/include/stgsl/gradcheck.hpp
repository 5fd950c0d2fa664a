/*
 * Copyright 2026 The stgsl Authors
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
#include <string>
#include <vector>

#include "stgsl/autodiff.hpp"

namespace stgsl {

struct GradcheckOptions {
  bool straight_through = true;  // false disables the straight-through adjoint (negative control)
  Precision precision = Precision::Double;
  std::uint64_t seed = 1;
  std::size_t max_coords = 64;
};

struct GradcheckResult {
  std::vector<FdReport> reports;  // one per trainable tensor, in parameter order
  double tolerance = 0.0;
  std::size_t sample_attempts = 0;
  bool passed = false;

  bool tensor_passed(const FdReport& r) const { return r.checked > 0 && r.max_rel_error <= tolerance; }
};

/// Tolerance for a precision: 1e-4 in double, 1e-2 in emulated single.
double gradcheck_tolerance(Precision precision);

/// Builds the N=6, T=6, batch=2 toy model, freezes one gumbel sample and
/// one set of dropout masks, and checks every trainable tensor against
/// central differences. Analytic gradients come from a tape at the chosen
/// precision; the numeric oracle always runs in double.
GradcheckResult run_gradcheck(const GradcheckOptions& options = {});

}  // namespace stgsl
