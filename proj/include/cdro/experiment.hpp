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


// Experiment plumbing behind the command-line runner: flat key-value
// configuration, dataset generation to disk, training with metrics files,
// and evaluation of saved checkpoints.

#pragma once

#include "cdro/core.hpp"
#include "cdro/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cdro {

/// Invalid configuration; reported before any training starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GeneratorConfig {
  int n = 2000;
  int d = 10;
  int k = 4;
  double separation = 3.5;
  std::string preset = "idn-mid-r5";
  int labels_per_instance = 1;
  /// Size of the clean held-out test set; 0 writes none.
  int test_n = 2000;
};

struct ExperimentConfig {
  TrainConfig train;
  GeneratorConfig generator;
  std::filesystem::path data_dir = "data";
  std::filesystem::path output_dir = "run";
  bool baseline_mv = true;
  bool baseline_em = true;

  /// Applies one documented key; throws ConfigError on an unknown key or a
  /// malformed value.
  void set(std::string_view key, std::string_view value);
  /// Every documented key with its current value, in key order.
  std::map<std::string, std::string> entries() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

const std::vector<ConfigKey>& config_keys();

/// Reads `key = value` lines; `#` starts a comment. Throws ConfigError with
/// the line number on malformed lines.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

struct GeneratedData {
  AnnotationDataset train;
  std::optional<AnnotationDataset> test;
};

/// Gaussian blobs annotated by the configured preset. Train features, test
/// features and annotations use independent streams derived from the seed.
GeneratedData generate_data(const ExperimentConfig& config);

/// Writes features.csv, annotations.csv, truth.csv, test_features.csv,
/// test_truth.csv (when a test set exists) and manifest.json.
void write_data_dir(const std::filesystem::path& dir, const GeneratedData& data, const ExperimentConfig& config);

/// Reads a directory written by write_data_dir (manifest optional; counts
/// are inferred when it is missing).
GeneratedData read_data_dir(const std::filesystem::path& dir);

struct RunOutcome {
  std::string name;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  std::optional<double> test_acc;
};

struct ExperimentSummary {
  RunOutcome adaptcdrp;
  std::optional<RunOutcome> ce_mv;
  std::optional<RunOutcome> ce_em;
  double small_loss_ratio = 1.0;
  int anchors = 0;
};

/// Validates the configuration against the data, then trains AdaptCDRP and
/// the enabled baselines. Writes metrics.jsonl (AdaptCDRP epochs),
/// metrics_<baseline>.jsonl, summary.json and the best checkpoints into
/// `config.output_dir`. Progress lines go to `log` when given.
ExperimentSummary run_experiment(const ExperimentConfig& config, const GeneratedData& data, std::ostream* log = nullptr);

struct EvalOutcome {
  std::string name;
  double accuracy = 0.0;
};

/// Scores every checkpoint found in `run_dir` against the true labels of
/// `data` (its test set when present, otherwise the training truth).
std::vector<EvalOutcome> evaluate_run(const std::filesystem::path& run_dir, const GeneratedData& data);

}  // namespace cdro
