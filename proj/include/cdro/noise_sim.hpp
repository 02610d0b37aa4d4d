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

// Synthetic data: Gaussian class blobs and simulated annotators whose flip
// probability depends on the instance through a feature projection.

#pragma once

#include "cdro/core.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdro {

enum class NoiseModel {
  /// Flip rate and flip target driven by per-class feature projections.
  InstanceDependent,
  /// Flip with probability target_rate, target uniform over the other classes.
  Uniform,
};

struct AnnotatorSpec {
  double target_rate = 0.0;
  NoiseModel model = NoiseModel::InstanceDependent;
  /// d x K projection vectors (column c for class c). Empty means draw unit
  /// vectors from the annotation seed.
  Eigen::MatrixXd projections;
};

/// k unit-covariance blobs with pairwise mean distance `separation` (regular
/// simplex along the first k axes when d >= k, otherwise a regular polygon
/// with that side length in the first two axes). Labels are balanced.
AnnotationDataset make_gaussian_dataset(int n, int d, int k, double separation, std::uint64_t seed);

/// Adds `labels_per_instance` annotations per instance from distinct
/// annotators drawn uniformly. Existing annotations are replaced; the input
/// must carry true labels.
AnnotationDataset annotate(const AnnotationDataset& dataset, std::span<const AnnotatorSpec> annotators,
                           int labels_per_instance, std::uint64_t seed);

/// Per-instance flip probabilities of one annotator (length n), averaging to
/// the target rate.
Eigen::VectorXd flip_probabilities(const Eigen::MatrixXd& standardized, std::span<const ClassIndex> truth,
                                   const AnnotatorSpec& spec);

/// Column-wise standardized copy of the features.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& features);

/// Annotator groups: idn-{low,mid,high}-r{5,10,30,50,100,200}.
std::vector<AnnotatorSpec> annotator_preset(std::string_view name);
std::vector<std::string> preset_names();

/// Fraction of annotations that differ from the true label.
double realized_noise_rate(const AnnotationDataset& dataset);

}  // namespace cdro
