// Copyright 2026 The cdro Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Randomized checks of the closed forms against brute-force oracles. Shared
// by the command-line `oracle-check` and the acceptance suite.

#pragma once

#include <cstdint>
#include <string>

namespace cdro {

struct CheckResult {
  bool passed = false;
  /// Worst observed discrepancy and counts, human readable.
  std::string detail;
  double seconds = 0.0;
};

/// Per-point dual minimum against the TV primal, K in [2, 6], p = 1.
CheckResult check_duality(int instances, std::uint64_t seed, double tolerance = 1e-8);
/// Binary closed-form action against a 2-D grid, for the linear and the
/// clipped negative-log transform (`instances` each).
CheckResult check_binary_action(int instances, std::uint64_t seed, double slack = 1e-3);
/// Multi-class closed form against extreme-point enumeration, K <= 6.
CheckResult check_multiclass_action(int instances, std::uint64_t seed, double tolerance = 1e-9,
                                    double support_margin = 1e-6);
/// Batch closed form against a gamma grid (step 1e-5), n <= 20, K <= 5,
/// plus the two-point worked example.
CheckResult check_batch_closed_form(int batches, std::uint64_t seed, double tolerance = 1e-4);
/// Analytic robust-loss gradients against central differences.
CheckResult check_gradients(int configs, std::uint64_t seed, double tolerance = 1e-4);

}  // namespace cdro
