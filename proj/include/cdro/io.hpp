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


// CSV files for datasets: features.csv (`instance_id,f0,...`),
// annotations.csv (`instance_id,annotator_id,label`, labels 1-based) and
// truth.csv (`instance_id,label`). Instance and annotator ids are 0-based.

#pragma once

#include "cdro/core.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdro {

/// Malformed input file; carries the offending file and 1-based line.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::filesystem::path file, int line, const std::string& message);

  const std::filesystem::path& file() const { return file_; }
  int line() const { return line_; }

 private:
  std::filesystem::path file_;
  int line_;
};

/// Doubles are written in shortest round-trip form, so a write/read cycle is
/// exact and repeated writes are byte-identical.
void write_features_csv(const std::filesystem::path& path, const Eigen::MatrixXd& features);
void write_annotations_csv(const std::filesystem::path& path, std::span<const Annotation> annotations);
void write_truth_csv(const std::filesystem::path& path, std::span<const ClassIndex> labels);

/// Row i must carry instance_id i.
Eigen::MatrixXd read_features_csv(const std::filesystem::path& path);
/// Instance ids must lie in [0, n); labels in [1, num_classes] when
/// num_classes > 0. Returned labels are 0-based.
std::vector<Annotation> read_annotations_csv(const std::filesystem::path& path, int n, int num_classes = 0);
/// One row per instance, in instance order.
std::vector<ClassIndex> read_truth_csv(const std::filesystem::path& path, int n, int num_classes = 0);

/// Assembles a dataset. num_classes and num_annotators of 0 are inferred
/// from the largest label and annotator id seen.
AnnotationDataset read_dataset(const std::filesystem::path& features, const std::optional<std::filesystem::path>& annotations,
                               const std::optional<std::filesystem::path>& truth, int num_classes = 0,
                               int num_annotators = 0);

}  // namespace cdro
