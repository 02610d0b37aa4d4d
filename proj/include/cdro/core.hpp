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

// Domain types shared by every module: label spaces, categorical
// distributions, loss transforms, the robust-loss specification and the
// crowdsourced annotation dataset.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cdro {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Class labels are 0-based everywhere inside the library.
using ClassIndex = int;

class LabelSpace {
 public:
  explicit LabelSpace(int k) : k_(k) {
    if (k < 2) throw std::invalid_argument("LabelSpace: need at least two classes");
  }
  int k() const { return k_; }
  bool contains(ClassIndex y) const { return y >= 0 && y < k_; }

 private:
  int k_;
};

/// Probability vector over K classes. Construction validates the simplex
/// constraint (entries in [0,1], total mass 1 within 1e-9).
template <typename Scalar = double>
class CategoricalDist {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit CategoricalDist(Vector<Scalar> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) throw std::invalid_argument("CategoricalDist: need K >= 2");
    for (Eigen::Index j = 0; j < probs_.size(); ++j) {
      const Scalar v = probs_(j);
      if (!(v >= Scalar(-kSumTolerance) && v <= Scalar(1 + kSumTolerance))) {
        throw std::invalid_argument("CategoricalDist: entry outside [0,1]");
      }
      probs_(j) = std::clamp(v, Scalar(0), Scalar(1));
    }
    if (std::abs(probs_.sum() - Scalar(1)) > Scalar(kSumTolerance)) {
      throw std::invalid_argument("CategoricalDist: entries do not sum to 1");
    }
  }

  CategoricalDist(std::initializer_list<Scalar> probs) : CategoricalDist(from_list(probs)) {}

  static CategoricalDist uniform(int k) {
    return CategoricalDist(Vector<Scalar>::Constant(k, Scalar(1) / Scalar(k)));
  }

  static CategoricalDist point_mass(int k, ClassIndex j) {
    if (j < 0 || j >= k) throw std::out_of_range("CategoricalDist::point_mass: class out of range");
    Vector<Scalar> v = Vector<Scalar>::Zero(k);
    v(j) = Scalar(1);
    return CategoricalDist(std::move(v));
  }

  /// Normalizes nonnegative weights; all-zero weights are rejected.
  static CategoricalDist normalized(const Vector<Scalar>& weights) {
    const Scalar total = weights.sum();
    if (!(total > Scalar(0)) || !std::isfinite(static_cast<double>(total)) || weights.minCoeff() < Scalar(0)) {
      throw std::invalid_argument("CategoricalDist::normalized: weights must be nonnegative with positive sum");
    }
    return CategoricalDist(weights / total);
  }

  int size() const { return static_cast<int>(probs_.size()); }
  Scalar operator[](ClassIndex j) const { return probs_(j); }
  const Vector<Scalar>& probs() const { return probs_; }

  /// Smallest index attaining the maximum probability.
  ClassIndex argmax() const {
    Eigen::Index best = 0;
    probs_.maxCoeff(&best);
    return static_cast<ClassIndex>(best);
  }

  bool operator==(const CategoricalDist& other) const { return probs_ == other.probs_; }

 private:
  static Vector<Scalar> from_list(std::initializer_list<Scalar> probs) {
    Vector<Scalar> v(static_cast<Eigen::Index>(probs.size()));
    Eigen::Index j = 0;
    for (Scalar p : probs) v(j++) = p;
    return v;
  }

  Vector<Scalar> probs_;
};

enum class TransformKind { Linear, ClippedNegLog, Custom };
enum class Curvature { Linear, Concave, Convex };

/// A bounded decreasing transform T on [0,1]; the per-class loss is
/// T(predicted probability of that class). Inputs are clipped to
/// [lower(), upper()] before evaluation.
template <typename Scalar = double>
class LossTransform {
 public:
  using Fn = std::function<Scalar(Scalar)>;

  /// T(t) = 1 - t.
  static LossTransform linear() {
    return LossTransform(TransformKind::Linear, "linear", Curvature::Linear, Scalar(0), Scalar(1),
                         [](Scalar t) { return Scalar(1) - t; }, [](Scalar) { return Scalar(-1); });
  }

  /// T(t) = -log(clip(t, lo, hi)).
  static LossTransform clipped_neg_log(Scalar lo = Scalar(0.01), Scalar hi = Scalar(0.99)) {
    if (!(lo > Scalar(0) && lo < hi && hi < Scalar(1))) {
      throw std::invalid_argument("clipped_neg_log: need 0 < lo < hi < 1");
    }
    using std::log;
    return LossTransform(TransformKind::ClippedNegLog, "clipped_neg_log", Curvature::Convex, lo, hi,
                         [](Scalar t) { return -log(t); }, [](Scalar t) { return Scalar(-1) / t; });
  }

  /// Arbitrary transform on [0,1]; the caller vouches for the curvature tag.
  static LossTransform custom(std::string name, Fn value, Fn derivative, Curvature curvature) {
    return LossTransform(TransformKind::Custom, std::move(name), curvature, Scalar(0), Scalar(1),
                         std::move(value), std::move(derivative));
  }

  Scalar operator()(Scalar t) const { return value_(clip(t)); }

  /// T' evaluated at the clipped input (the derivative of the transform on
  /// its effective domain, as used by the closed-form optimal actions).
  Scalar slope(Scalar t) const { return derivative_(clip(t)); }

  /// Derivative of t -> T(clip(t)); zero where the clip is active.
  Scalar gradient(Scalar t) const {
    if (kind_ == TransformKind::ClippedNegLog && !(t > lower_ && t < upper_)) return Scalar(0);
    return derivative_(clip(t));
  }

  Scalar clip(Scalar t) const { return std::clamp(t, lower_, upper_); }
  Scalar lower() const { return lower_; }
  Scalar upper() const { return upper_; }
  /// Largest attainable loss, T(lower()).
  Scalar max_value() const { return value_(lower_); }
  /// Smallest attainable loss, T(upper()).
  Scalar min_value() const { return value_(upper_); }

  TransformKind kind() const { return kind_; }
  Curvature curvature() const { return curvature_; }
  const std::string& name() const { return name_; }
  bool is_concave() const { return curvature_ != Curvature::Convex; }
  bool is_convex() const { return curvature_ != Curvature::Concave; }

 private:
  LossTransform(TransformKind kind, std::string name, Curvature curvature, Scalar lower, Scalar upper, Fn value,
                Fn derivative)
      : kind_(kind),
        name_(std::move(name)),
        curvature_(curvature),
        lower_(lower),
        upper_(upper),
        value_(std::move(value)),
        derivative_(std::move(derivative)) {}

  TransformKind kind_;
  std::string name_;
  Curvature curvature_;
  Scalar lower_;
  Scalar upper_;
  Fn value_;
  Fn derivative_;
};

/// Loss transform plus the Wasserstein ball parameters: order p, cost
/// scale kappa (cost c(y,y') = kappa * 1(y != y')) and radius epsilon.
template <typename Scalar = double>
class RobustLossSpec {
 public:
  RobustLossSpec(LossTransform<Scalar> transform, Scalar p, Scalar kappa, Scalar epsilon)
      : transform_(std::move(transform)), p_(p), kappa_(kappa), epsilon_(epsilon) {
    if (!(p_ >= Scalar(1))) throw std::invalid_argument("RobustLossSpec: p must be >= 1");
    if (!(kappa_ > Scalar(0))) throw std::invalid_argument("RobustLossSpec: kappa must be > 0");
    if (!(epsilon_ > Scalar(0))) throw std::invalid_argument("RobustLossSpec: epsilon must be > 0");
    using std::isfinite;
    if (!isfinite(static_cast<double>(rho()))) throw std::invalid_argument("RobustLossSpec: rho not finite");
  }

  const LossTransform<Scalar>& transform() const { return transform_; }
  Scalar p() const { return p_; }
  Scalar kappa() const { return kappa_; }
  Scalar epsilon() const { return epsilon_; }

  Scalar epsilon_pow() const {
    using std::pow;
    return pow(epsilon_, p_);
  }
  Scalar kappa_pow() const {
    using std::pow;
    return pow(kappa_, p_);
  }
  /// Ambiguity radius in units of the discrete cost: eps^p / kappa^p.
  Scalar rho() const { return epsilon_pow() / kappa_pow(); }

  /// End-to-end training requires epsilon in (0, 1/K).
  void require_training_radius(int k) const {
    if (!(epsilon_ < Scalar(1) / Scalar(k))) {
      throw std::invalid_argument("epsilon must lie in (0, 1/K) for training");
    }
  }

  RobustLossSpec with_epsilon(Scalar epsilon) const { return RobustLossSpec(transform_, p_, kappa_, epsilon); }

 private:
  LossTransform<Scalar> transform_;
  Scalar p_;
  Scalar kappa_;
  Scalar epsilon_;
};

template <typename Scalar>
Scalar rho(const RobustLossSpec<Scalar>& spec) {
  return spec.rho();
}

/// T(pred[label]) under the loss spec's transform.
template <typename Scalar>
Scalar loss_value(const RobustLossSpec<Scalar>& spec, const CategoricalDist<Scalar>& pred, ClassIndex label) {
  if (label < 0 || label >= pred.size()) throw std::out_of_range("loss_value: label out of range");
  return spec.transform()(pred[label]);
}

/// Per-class loss vector (T(pred_0), ..., T(pred_{K-1})).
template <typename Scalar>
Vector<Scalar> loss_vector(const LossTransform<Scalar>& transform, const CategoricalDist<Scalar>& pred) {
  Vector<Scalar> out(pred.size());
  for (int j = 0; j < pred.size(); ++j) out(j) = transform(pred[j]);
  return out;
}

using CategoricalDistd = CategoricalDist<double>;
using LossTransformd = LossTransform<double>;
using RobustLossSpecd = RobustLossSpec<double>;

// ---------------------------------------------------------------------------
// Annotation dataset

struct Annotation {
  int instance = 0;
  int annotator = 0;
  ClassIndex label = 0;

  bool operator==(const Annotation&) const = default;
};

/// Instances (rows of `features`) with sparse (instance, annotator, label)
/// triples. Annotations are stored sorted by (instance, annotator).
class AnnotationDataset {
 public:
  AnnotationDataset(Eigen::MatrixXd features, std::vector<Annotation> annotations, int num_classes,
                    int num_annotators, std::optional<std::vector<ClassIndex>> true_labels = std::nullopt);

  int n() const { return static_cast<int>(features_.rows()); }
  int d() const { return static_cast<int>(features_.cols()); }
  int k() const { return k_; }
  int r() const { return r_; }

  const Eigen::MatrixXd& features() const { return features_; }
  auto row(int i) const { return features_.row(i); }

  const std::vector<Annotation>& annotations() const { return annotations_; }
  std::span<const Annotation> annotations_of(int i) const {
    return std::span<const Annotation>(annotations_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
  }

  bool has_truth() const { return true_labels_.has_value(); }
  const std::vector<ClassIndex>& true_labels() const;

  bool fully_annotated() const;
  /// Throws if some instance carries no annotation.
  void require_fully_annotated() const;

  /// Rows `indices` (in that order), annotations and truth re-indexed.
  AnnotationDataset subset(std::span<const int> indices) const;

  /// Same features/truth with a new annotation set.
  AnnotationDataset with_annotations(std::vector<Annotation> annotations, int num_annotators) const;

 private:
  Eigen::MatrixXd features_;
  std::vector<Annotation> annotations_;
  std::vector<std::size_t> offsets_;
  int k_;
  int r_;
  std::optional<std::vector<ClassIndex>> true_labels_;
};

}  // namespace cdro
