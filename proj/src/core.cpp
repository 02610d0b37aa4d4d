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

#include "cdro/core.hpp"

#include <algorithm>
#include <string>

namespace cdro {

AnnotationDataset::AnnotationDataset(Eigen::MatrixXd features, std::vector<Annotation> annotations,
                                     int num_classes, int num_annotators,
                                     std::optional<std::vector<ClassIndex>> true_labels)
    : features_(std::move(features)),
      annotations_(std::move(annotations)),
      k_(LabelSpace(num_classes).k()),
      r_(num_annotators),
      true_labels_(std::move(true_labels)) {
  if (r_ < 0) throw std::invalid_argument("AnnotationDataset: negative annotator count");
  const int rows = n();
  for (const Annotation& a : annotations_) {
    if (a.instance < 0 || a.instance >= rows) {
      throw std::out_of_range("AnnotationDataset: instance index " + std::to_string(a.instance) + " out of range");
    }
    if (a.annotator < 0 || a.annotator >= r_) {
      throw std::out_of_range("AnnotationDataset: annotator index " + std::to_string(a.annotator) +
                              " out of range");
    }
    if (a.label < 0 || a.label >= k_) {
      throw std::out_of_range("AnnotationDataset: label " + std::to_string(a.label) + " out of range");
    }
  }
  std::sort(annotations_.begin(), annotations_.end(), [](const Annotation& a, const Annotation& b) {
    return a.instance != b.instance ? a.instance < b.instance : a.annotator < b.annotator;
  });
  for (std::size_t t = 1; t < annotations_.size(); ++t) {
    if (annotations_[t].instance == annotations_[t - 1].instance &&
        annotations_[t].annotator == annotations_[t - 1].annotator) {
      throw std::invalid_argument("AnnotationDataset: duplicate annotation for instance " +
                                  std::to_string(annotations_[t].instance) + ", annotator " +
                                  std::to_string(annotations_[t].annotator));
    }
  }
  offsets_.assign(static_cast<std::size_t>(rows) + 1, 0);
  for (const Annotation& a : annotations_) ++offsets_[static_cast<std::size_t>(a.instance) + 1];
  for (int i = 0; i < rows; ++i) offsets_[i + 1] += offsets_[i];

  if (true_labels_) {
    if (static_cast<int>(true_labels_->size()) != rows) {
      throw std::invalid_argument("AnnotationDataset: true label count does not match instance count");
    }
    for (ClassIndex y : *true_labels_) {
      if (y < 0 || y >= k_) throw std::out_of_range("AnnotationDataset: true label out of range");
    }
  }
}

const std::vector<ClassIndex>& AnnotationDataset::true_labels() const {
  if (!true_labels_) throw std::logic_error("AnnotationDataset: no ground truth available");
  return *true_labels_;
}

bool AnnotationDataset::fully_annotated() const {
  for (int i = 0; i < n(); ++i) {
    if (offsets_[i + 1] == offsets_[i]) return false;
  }
  return true;
}

void AnnotationDataset::require_fully_annotated() const {
  for (int i = 0; i < n(); ++i) {
    if (offsets_[i + 1] == offsets_[i]) {
      throw std::invalid_argument("AnnotationDataset: instance " + std::to_string(i) + " has no annotations");
    }
  }
}

AnnotationDataset AnnotationDataset::subset(std::span<const int> indices) const {
  Eigen::MatrixXd feats(static_cast<Eigen::Index>(indices.size()), features_.cols());
  std::vector<Annotation> ann;
  std::optional<std::vector<ClassIndex>> truth;
  if (true_labels_) truth.emplace();
  for (std::size_t t = 0; t < indices.size(); ++t) {
    const int i = indices[t];
    if (i < 0 || i >= n()) throw std::out_of_range("AnnotationDataset::subset: index out of range");
    feats.row(static_cast<Eigen::Index>(t)) = features_.row(i);
    for (const Annotation& a : annotations_of(i)) ann.push_back({static_cast<int>(t), a.annotator, a.label});
    if (truth) truth->push_back((*true_labels_)[i]);
  }
  return AnnotationDataset(std::move(feats), std::move(ann), k_, r_, std::move(truth));
}

AnnotationDataset AnnotationDataset::with_annotations(std::vector<Annotation> annotations,
                                                      int num_annotators) const {
  return AnnotationDataset(features_, std::move(annotations), k_, num_annotators, true_labels_);
}

}  // namespace cdro
