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

#include "cdro/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace cdro {

namespace {

// log-sum-exp of a row; also normalizes it in place into probabilities.
double normalize_log_row(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  const double top = row.maxCoeff();
  if (!std::isfinite(top)) return top;
  double total = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    row(j) = std::exp(row(j) - top);
    total += row(j);
  }
  row /= total;
  return top + std::log(total);
}

std::vector<Eigen::MatrixXd> log_of(const ConfusionModel& model) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(model.per_annotator.size());
  for (const auto& m : model.per_annotator) out.push_back(m.array().log().matrix());
  return out;
}

void require_same_shape(const ConfusionModel& confusions, const AnnotationDataset& dataset) {
  if (confusions.k() != dataset.k() || confusions.r() < dataset.r()) {
    throw std::invalid_argument("confusion model does not match the dataset's classes or annotators");
  }
}

ConfusionModel from_counts(std::vector<Eigen::MatrixXd> counts, double smoothing) {
  ConfusionModel out;
  out.smoothing = smoothing;
  for (auto& c : counts) {
    const auto k = c.cols();
    for (Eigen::Index j = 0; j < k; ++j) {
      const double total = c.row(j).sum();
      if (total + k * smoothing > 0) {
        c.row(j) = (c.row(j).array() + smoothing) / (total + k * smoothing);
      } else {
        c.row(j).setConstant(1.0 / k);
      }
    }
    out.per_annotator.push_back(std::move(c));
  }
  return out;
}

// M-step from soft labels (n x K); counts accumulate in instance order.
ConfusionModel fit_confusions(const AnnotationDataset& dataset, const Eigen::MatrixXd& soft, double smoothing) {
  const int k = dataset.k();
  std::vector<Eigen::MatrixXd> counts(static_cast<std::size_t>(dataset.r()), Eigen::MatrixXd::Zero(k, k));
  for (int i = 0; i < dataset.n(); ++i) {
    for (const Annotation& a : dataset.annotations_of(i)) {
      counts[static_cast<std::size_t>(a.annotator)].col(a.label) += soft.row(i).transpose();
    }
  }
  return from_counts(std::move(counts), smoothing);
}

}  // namespace

std::vector<ClassIndex> majority_vote(const AnnotationDataset& dataset, std::uint64_t seed) {
  dataset.require_fully_annotated();
  std::mt19937_64 rng(seed);
  std::vector<ClassIndex> out(static_cast<std::size_t>(dataset.n()));
  std::vector<int> votes(static_cast<std::size_t>(dataset.k()));
  std::vector<ClassIndex> tied;
  for (int i = 0; i < dataset.n(); ++i) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const Annotation& a : dataset.annotations_of(i)) ++votes[static_cast<std::size_t>(a.label)];
    const int top = *std::max_element(votes.begin(), votes.end());
    tied.clear();
    for (int j = 0; j < dataset.k(); ++j) {
      if (votes[static_cast<std::size_t>(j)] == top) tied.push_back(j);
    }
    if (tied.size() == 1) {
      out[static_cast<std::size_t>(i)] = tied.front();
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, tied.size() - 1);
      out[static_cast<std::size_t>(i)] = tied[pick(rng)];
    }
  }
  return out;
}

Eigen::MatrixXd vote_fractions(const AnnotationDataset& dataset) {
  dataset.require_fully_annotated();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dataset.n(), dataset.k());
  for (int i = 0; i < dataset.n(); ++i) {
    const auto ann = dataset.annotations_of(i);
    for (const Annotation& a : ann) out(i, a.label) += 1.0;
    out.row(i) /= static_cast<double>(ann.size());
  }
  return out;
}

ConfusionModel estimate_confusions(const AnnotationDataset& dataset, std::span<const AnchorLabel> anchors,
                                   double smoothing) {
  if (anchors.empty()) throw std::invalid_argument("estimate_confusions: empty anchor set");
  if (smoothing < 0) throw std::invalid_argument("estimate_confusions: smoothing must be nonnegative");
  const int k = dataset.k();
  std::vector<Eigen::MatrixXd> counts(static_cast<std::size_t>(dataset.r()), Eigen::MatrixXd::Zero(k, k));
  for (const AnchorLabel& anchor : anchors) {
    if (anchor.instance < 0 || anchor.instance >= dataset.n() || anchor.label < 0 || anchor.label >= k) {
      throw std::out_of_range("estimate_confusions: anchor out of range");
    }
    for (const Annotation& a : dataset.annotations_of(anchor.instance)) {
      counts[static_cast<std::size_t>(a.annotator)](anchor.label, a.label) += 1.0;
    }
  }
  return from_counts(std::move(counts), smoothing);
}

CategoricalDistd bayes_posterior(const CategoricalDistd& prior, const ConfusionModel& confusions,
                                 std::span<const Annotation> annotations) {
  const int k = prior.size();
  if (confusions.k() != k) throw std::invalid_argument("bayes_posterior: class count mismatch");
  Eigen::RowVectorXd logp = prior.probs().transpose().array().log();
  for (const Annotation& a : annotations) {
    if (a.annotator < 0 || a.annotator >= confusions.r()) {
      throw std::out_of_range("bayes_posterior: annotator index out of range");
    }
    if (a.label < 0 || a.label >= k) throw std::out_of_range("bayes_posterior: label out of range");
    logp += confusions.per_annotator[static_cast<std::size_t>(a.annotator)].col(a.label).transpose().array().log().matrix();
  }
  if (!std::isfinite(normalize_log_row(logp))) return prior;
  return CategoricalDistd(logp.transpose());
}

Eigen::MatrixXd bayes_posteriors(const Eigen::MatrixXd& priors, const ConfusionModel& confusions,
                                 const AnnotationDataset& dataset) {
  require_same_shape(confusions, dataset);
  if (priors.rows() != dataset.n() || priors.cols() != dataset.k()) {
    throw std::invalid_argument("bayes_posteriors: priors do not match the dataset");
  }
  const auto logs = log_of(confusions);
  Eigen::MatrixXd out = priors.array().log().matrix();
  for (int i = 0; i < dataset.n(); ++i) {
    for (const Annotation& a : dataset.annotations_of(i)) {
      out.row(i) += logs[static_cast<std::size_t>(a.annotator)].col(a.label).transpose();
    }
    if (!std::isfinite(normalize_log_row(out.row(i)))) out.row(i) = priors.row(i);
  }
  return out;
}

EmResult dawid_skene_em(const AnnotationDataset& dataset, int max_iters, double tol, double smoothing) {
  if (max_iters < 1) throw std::invalid_argument("dawid_skene_em: max_iters must be at least 1");
  const int n = dataset.n();
  const int k = dataset.k();
  Eigen::MatrixXd soft = vote_fractions(dataset);

  EmResult out{{}, {}, CategoricalDistd::uniform(k), 0, {}, {}, false};
  for (int iter = 1; iter <= max_iters; ++iter) {
    // M-step.
    Eigen::VectorXd prior_counts = soft.colwise().sum().transpose();
    Eigen::VectorXd prior = (prior_counts.array() + smoothing) / (n + k * smoothing);
    ConfusionModel conf = fit_confusions(dataset, soft, smoothing);

    // E-step.
    const auto logs = log_of(conf);
    const Eigen::RowVectorXd log_prior = prior.transpose().array().log();
    Eigen::MatrixXd next(n, k);
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      next.row(i) = log_prior;
      for (const Annotation& a : dataset.annotations_of(i)) {
        next.row(i) += logs[static_cast<std::size_t>(a.annotator)].col(a.label).transpose();
      }
      ll += normalize_log_row(next.row(i));
    }
    double penalty = smoothing * log_prior.sum();
    for (const auto& l : logs) penalty += smoothing * l.sum();

    const double change = (next - soft).cwiseAbs().maxCoeff();
    soft = std::move(next);
    out.iterations = iter;
    out.log_likelihood.push_back(ll);
    out.map_objective.push_back(ll + penalty);
    out.confusions = std::move(conf);
    out.class_prior = CategoricalDistd(prior);
    if (change < tol) {
      out.converged = true;
      break;
    }
  }
  out.posteriors.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.posteriors.emplace_back(soft.row(i).transpose());
  return out;
}

}  // namespace cdro
