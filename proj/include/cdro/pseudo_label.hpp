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

// Likelihood-ratio robust pseudo-labels: an instance receives the label k*
// = argmax_j P_j only when P_{k*} / max_{j != k*} P_j >= C for a threshold
// C > 1. Selected instances form the pseudo-empirical reference distribution
// (a point mass on each pseudo-label).

#pragma once

#include "cdro/core.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cdro {

/// Runner-up floor so that point-mass posteriors give a finite ratio.
inline constexpr double kRunnerUpFloor = 1e-12;

template <typename Scalar>
struct LrtDecision {
  ClassIndex label;
  Scalar ratio;
};

template <typename Scalar>
std::optional<LrtDecision<Scalar>> lrt_assign(const CategoricalDist<Scalar>& posterior, Scalar threshold) {
  if (!(threshold > Scalar(1))) throw std::invalid_argument("lrt_assign: threshold must exceed 1");
  const ClassIndex top = posterior.argmax();
  Scalar runner_up = 0;
  for (ClassIndex j = 0; j < posterior.size(); ++j) {
    if (j == top) continue;
    if (posterior[j] == posterior[top]) return std::nullopt;  // exact tie abstains
    runner_up = std::max(runner_up, posterior[j]);
  }
  const Scalar ratio = posterior[top] / std::max(runner_up, Scalar(kRunnerUpFloor));
  if (ratio >= threshold) return LrtDecision<Scalar>{top, ratio};
  return std::nullopt;
}

struct PseudoLabel {
  int instance;
  ClassIndex label;
  double ratio;

  bool operator==(const PseudoLabel&) const = default;
};

struct PseudoLabelSet {
  std::vector<PseudoLabel> entries;
  double threshold = 2.0;
  /// Fraction of instances that received a pseudo-label.
  double coverage = 0.0;

  bool empty() const { return entries.empty(); }
  bool operator==(const PseudoLabelSet&) const = default;
};

/// How selected instances enter the reference distribution.
enum class ReferenceMode { PointMass, SoftPosterior };

PseudoLabelSet build_pseudo_empirical(const AnnotationDataset& dataset, std::span<const CategoricalDistd> posteriors,
                                      double threshold);

/// Same, with posteriors given as the rows of an n x K matrix.
PseudoLabelSet build_pseudo_empirical(const Eigen::MatrixXd& posteriors, double threshold);

/// One reference row per selected entry (in entry order).
Eigen::MatrixXd reference_matrix(const PseudoLabelSet& set, const Eigen::MatrixXd& posteriors,
                                 ReferenceMode mode = ReferenceMode::PointMass);

/// Fraction of entries whose pseudo-label equals the true label; NaN when empty.
double pseudo_label_precision(const PseudoLabelSet& set, std::span<const ClassIndex> truth);

}  // namespace cdro
