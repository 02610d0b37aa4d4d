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

// Annotator confusion estimation, true-label posteriors and the label
// aggregation baselines (majority vote, Dawid-Skene EM). Annotators are
// treated as conditionally independent given the true label, so the
// likelihood of an instance's annotations factorizes over annotators.

#pragma once

#include "cdro/core.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cdro {

struct ConfusionModel {
  /// One K x K matrix per annotator; row j is the distribution of the
  /// reported label given true class j.
  std::vector<Eigen::MatrixXd> per_annotator;
  double smoothing = 1.0;

  int r() const { return static_cast<int>(per_annotator.size()); }
  int k() const { return per_annotator.empty() ? 0 : static_cast<int>(per_annotator.front().rows()); }
};

struct AnchorLabel {
  int instance;
  ClassIndex label;

  bool operator==(const AnchorLabel&) const = default;
};

/// Plurality label per instance; ties drawn uniformly with an RNG seeded by
/// `seed`.
std::vector<ClassIndex> majority_vote(const AnnotationDataset& dataset, std::uint64_t seed);

/// Per-instance vote fractions (n x K).
Eigen::MatrixXd vote_fractions(const AnnotationDataset& dataset);

/// Frequency counts over the anchors, row-normalized as
/// (count + s) / (row_total + K s). A row with no data and s = 0 is uniform.
ConfusionModel estimate_confusions(const AnnotationDataset& dataset, std::span<const AnchorLabel> anchors,
                                   double smoothing = 1.0);

/// posterior_j proportional to prior_j * prod_r conf_r[j][label_r], computed in
/// log space. Falls back to the prior if every class gets zero mass.
CategoricalDistd bayes_posterior(const CategoricalDistd& prior, const ConfusionModel& confusions,
                                 std::span<const Annotation> annotations);

/// Row-wise bayes_posterior over a whole dataset; `priors` is n x K.
Eigen::MatrixXd bayes_posteriors(const Eigen::MatrixXd& priors, const ConfusionModel& confusions,
                                 const AnnotationDataset& dataset);

struct EmResult {
  std::vector<CategoricalDistd> posteriors;
  ConfusionModel confusions;
  CategoricalDistd class_prior;
  int iterations = 0;
  /// Log-likelihood of the observed annotations at the parameters used in
  /// each E-step.
  std::vector<double> log_likelihood;
  /// Log-likelihood plus the Dirichlet smoothing terms; EM never decreases it.
  std::vector<double> map_objective;
  bool converged = false;
};

/// Dawid-Skene EM initialized from vote fractions. Stops when the largest
/// posterior change falls below `tol` or after `max_iters` iterations.
EmResult dawid_skene_em(const AnnotationDataset& dataset, int max_iters = 100, double tol = 1e-6,
                        double smoothing = 1.0);

}  // namespace cdro
