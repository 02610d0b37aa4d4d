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

// AdaptCDRP training: two classifiers warmed up on majority-vote labels,
// annotator confusions estimated on a small-loss anchor set, then per-epoch
// posterior / pseudo-label / multiplier updates with cross-training. Also
// hosts the CE(MV) and CE(EM) baselines.

#pragma once

#include "cdro/classifier.hpp"
#include "cdro/core.hpp"
#include "cdro/posterior.hpp"
#include "cdro/pseudo_label.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace cdro {

struct TrainConfig {
  /// Total epochs, warm-up included.
  int epochs = 50;
  int warmup_epochs = 10;
  double lrt_threshold = 2.0;
  double lambda = 10.0;
  RobustLossSpecd spec{LossTransformd::clipped_neg_log(), 1.0, 1.0, 0.1};
  OptimizerConfig optimizer{};
  int batch_size = 128;
  std::uint64_t seed = 0;
  std::optional<double> small_loss_ratio;
  double smoothing = 1.0;
  /// Dirichlet pseudo-count for the CE(EM) baseline. With one label per
  /// instance the likelihood is flat along many directions and a large
  /// pseudo-count drags the confusions to uniform.
  double em_smoothing = 0.01;
  ReferenceMode reference_mode = ReferenceMode::PointMass;
  Architecture architecture = Architecture::Mlp;
  int hidden = 32;
  double validation_fraction = 0.1;
  bool allow_zero_warmup = false;
  /// Exchange the initialization streams of the two classifiers.
  bool swap_model_seeds = false;

  /// Throws std::invalid_argument on a bad combination.
  void validate(int num_classes) const;
};

struct EpochMetrics {
  int epoch = 0;
  bool warmup = false;
  double train_loss = 0.0;
  double gamma_a = 0.0;
  double gamma_b = 0.0;
  double pseudo_coverage = 0.0;
  std::optional<double> pseudo_precision;
  double val_acc = 0.0;
  std::optional<double> test_acc;
  /// Classifiers that fell back to majority-vote labels this epoch.
  int fallbacks = 0;
};

struct TrainState {
  SoftmaxModel model_a;
  SoftmaxModel model_b;
  OptimizerState opt_a;
  OptimizerState opt_b;
  std::mt19937_64 order_a;
  std::mt19937_64 order_b;
  double gamma_a = 0.0;
  double gamma_b = 0.0;
  int epoch = 0;
  std::vector<EpochMetrics> history;
};

/// Training rows and a held-out validation split scored against
/// majority-vote labels.
struct DataSplit {
  AnnotationDataset train;
  AnnotationDataset validation;
  std::vector<ClassIndex> train_mv;
  std::vector<ClassIndex> validation_mv;
};

DataSplit split_for_training(const AnnotationDataset& dataset, double validation_fraction, std::uint64_t seed);

struct TrainResult {
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  std::optional<double> test_acc;
  SoftmaxModel model_a;
  SoftmaxModel model_b;
  double small_loss_ratio = 1.0;
  int anchors = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

class AdaptCdrpTrainer {
 public:
  /// `test` (optional, must carry truth) is scored every epoch.
  AdaptCdrpTrainer(const AnnotationDataset& dataset, TrainConfig config, const AnnotationDataset* test = nullptr);

  const TrainState& state() const { return state_; }
  const DataSplit& split() const { return split_; }
  const TrainConfig& config() const { return config_; }

  /// Warm-up epochs on majority-vote labels for both classifiers.
  void warmup(const EpochCallback& on_epoch = {});
  /// Mean disagreement of the two classifiers with the majority vote.
  double estimate_noise_rate() const;
  /// The ceil(ratio * n) training rows with the smallest clipped
  /// cross-entropy against the majority vote, averaged over both models.
  std::vector<AnchorLabel> select_small_loss(double ratio) const;
  void set_confusions(ConfusionModel confusions) { confusions_ = std::move(confusions); }
  const std::optional<ConfusionModel>& confusions() const { return confusions_; }
  /// One robust epoch; requires confusions.
  const EpochMetrics& train_epoch();

  /// Averaged class probabilities of the two classifiers.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;

  TrainResult run(const EpochCallback& on_epoch = {});

 private:
  EpochMetrics evaluate(EpochMetrics m) const;
  void remember_if_best(const EpochMetrics& m);

  TrainConfig config_;
  DataSplit split_;
  const AnnotationDataset* test_;
  Eigen::MatrixXd train_targets_mv_;
  TrainState state_;
  std::optional<ConfusionModel> confusions_;
  double small_loss_ratio_ = 1.0;
  int anchors_ = 0;
  int best_epoch_ = 0;
  double best_val_ = -1.0;
  std::optional<SoftmaxModel> best_a_;
  std::optional<SoftmaxModel> best_b_;
};

enum class Baseline { MajorityVote, DawidSkene };

std::string to_string(Baseline b);

struct BaselineResult {
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  std::optional<double> test_acc;
  SoftmaxModel model;
};

/// One classifier trained for config.epochs with the loss spec's transform on
/// majority-vote labels or on argmax Dawid-Skene labels.
BaselineResult train_baseline(Baseline kind, const AnnotationDataset& dataset, const TrainConfig& config,
                              const AnnotationDataset* test = nullptr, const EpochCallback& on_epoch = {});

}  // namespace cdro
