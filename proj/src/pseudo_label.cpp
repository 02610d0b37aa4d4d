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

#include "cdro/pseudo_label.hpp"

#include <limits>

namespace cdro {

PseudoLabelSet build_pseudo_empirical(const AnnotationDataset& dataset, std::span<const CategoricalDistd> posteriors,
                                      double threshold) {
  if (static_cast<int>(posteriors.size()) != dataset.n()) {
    throw std::invalid_argument("build_pseudo_empirical: posteriors do not align with the dataset");
  }
  PseudoLabelSet out;
  out.threshold = threshold;
  for (int i = 0; i < dataset.n(); ++i) {
    if (auto d = lrt_assign(posteriors[static_cast<std::size_t>(i)], threshold)) {
      out.entries.push_back({i, d->label, d->ratio});
    }
  }
  out.coverage = dataset.n() > 0 ? static_cast<double>(out.entries.size()) / dataset.n() : 0.0;
  return out;
}

PseudoLabelSet build_pseudo_empirical(const Eigen::MatrixXd& posteriors, double threshold) {
  PseudoLabelSet out;
  out.threshold = threshold;
  for (Eigen::Index i = 0; i < posteriors.rows(); ++i) {
    const CategoricalDistd p(posteriors.row(i).transpose());
    if (auto d = lrt_assign(p, threshold)) out.entries.push_back({static_cast<int>(i), d->label, d->ratio});
  }
  out.coverage = posteriors.rows() > 0 ? static_cast<double>(out.entries.size()) / posteriors.rows() : 0.0;
  return out;
}

Eigen::MatrixXd reference_matrix(const PseudoLabelSet& set, const Eigen::MatrixXd& posteriors, ReferenceMode mode) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(set.entries.size()), posteriors.cols());
  for (std::size_t t = 0; t < set.entries.size(); ++t) {
    const auto row = static_cast<Eigen::Index>(t);
    if (mode == ReferenceMode::PointMass) {
      out(row, set.entries[t].label) = 1.0;
    } else {
      out.row(row) = posteriors.row(set.entries[t].instance);
    }
  }
  return out;
}

double pseudo_label_precision(const PseudoLabelSet& set, std::span<const ClassIndex> truth) {
  if (set.entries.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hits = 0;
  for (const PseudoLabel& e : set.entries) {
    if (truth[static_cast<std::size_t>(e.instance)] == e.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(set.entries.size());
}

}  // namespace cdro
