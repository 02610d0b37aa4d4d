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

// Softmax classifiers with hand-written backpropagation, the fixed-gamma
// robust loss, and first-order optimizers.

#pragma once

#include "cdro/core.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>

namespace cdro {

enum class Architecture { Linear, Mlp };

std::string to_string(Architecture arch);
Architecture architecture_from_string(const std::string& name);

/// d -> K softmax regression, or d -> h (tanh) -> K. Parameters live in one
/// flat vector: [W (K x d), b (K)] or [W1 (h x d), b1 (h), W2 (K x h), b2 (K)],
/// matrices column-major.
class SoftmaxModel {
 public:
  SoftmaxModel(Architecture arch, int d, int k, int hidden = 32);

  /// Glorot-uniform weights, zero biases.
  static SoftmaxModel initialized(Architecture arch, int d, int k, int hidden, std::mt19937_64& rng);

  Architecture architecture() const { return arch_; }
  int d() const { return d_; }
  int k() const { return k_; }
  int hidden() const { return hidden_; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::Index num_params() const { return params_.size(); }

  CategoricalDistd predict(const Eigen::VectorXd& x) const;
  /// Row-wise class probabilities (n x K).
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const;

  /// Gradient of sum_i <grad_logits.row(i), logits(x).row(i)> with respect
  /// to the parameters.
  Eigen::VectorXd backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& grad_logits) const;

  bool operator==(const SoftmaxModel& other) const;

 private:
  Architecture arch_;
  int d_;
  int k_;
  int hidden_;
  Eigen::VectorXd params_;
};

/// Numerically stable row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
  /// Reference mass whose inner maximizer differs from the reference label,
  /// averaged over the batch (robust loss only).
  double mismatch = 0.0;
};

/// Mean over rows of sum_j target_j * T(p_j): soft-target loss through the
/// spec's transform (clipped cross-entropy for the negative-log transform).
LossAndGradient soft_target_gradient(const SoftmaxModel& model, const Eigen::MatrixXd& x,
                                     const Eigen::MatrixXd& targets, const LossTransformd& transform);

/// Mean over rows of the per-point dual objective at fixed gamma against the
/// reference rows. The inner maximizer is held fixed (smallest index on ties)
/// when differentiating.
LossAndGradient robust_batch_gradient(const SoftmaxModel& model, const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXd& references, const RobustLossSpecd& spec, double gamma);

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-2;
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  OptimizerConfig config;
  Eigen::VectorXd first;
  Eigen::VectorXd second;
  long steps = 0;
};

/// One update in place. Momentum SGD: v = mu v + g, w -= lr v. Adam keeps
/// bias-corrected moment estimates. Weight decay is added to the gradient.
void sgd_step(SoftmaxModel& model, const Eigen::VectorXd& gradient, double learning_rate, OptimizerState& state);

/// Text checkpoint: a "cdro-model v1" line, an architecture line
/// "<arch> <d> <k> <hidden>", the parameter count, then one parameter per
/// line in round-trip precision.
void save_model(const SoftmaxModel& model, const std::filesystem::path& path);
SoftmaxModel load_model(const std::filesystem::path& path);

double accuracy(const Eigen::MatrixXd& probs, std::span<const ClassIndex> labels);

}  // namespace cdro
