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

#include "cdro/trainer.hpp"

#include "cdro/wasserstein_dual.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cdro {

namespace {

enum SeedTag : std::uint32_t { kModelA = 1, kModelB = 2, kSplit = 3, kVote = 4, kOrderA = 5, kOrderB = 6 };

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

Eigen::MatrixXd one_hot(std::span<const ClassIndex> labels, int k) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), k);
  for (std::size_t i = 0; i < labels.size(); ++i) out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return out;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, std::span<const int> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t t = 0; t < rows.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = m.row(rows[t]);
  return out;
}

// Shuffled minibatch pass; `step` returns the batch loss and gradient.
template <typename Step>
double minibatch_epoch(SoftmaxModel& model, OptimizerState& opt, std::mt19937_64& order, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& targets, int batch_size, Step step) {
  const int n = static_cast<int>(x.rows());
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), order);
  double total = 0.0;
  for (int start = 0; start < n; start += batch_size) {
    const int stop = std::min(n, start + batch_size);
    const std::span<const int> rows(perm.data() + start, static_cast<std::size_t>(stop - start));
    const Eigen::MatrixXd bx = gather_rows(x, rows);
    const Eigen::MatrixXd bt = gather_rows(targets, rows);
    const LossAndGradient lg = step(model, bx, bt);
    sgd_step(model, lg.gradient, opt.config.learning_rate, opt);
    total += lg.loss * (stop - start);
  }
  return n > 0 ? total / n : 0.0;
}

double soft_epoch(SoftmaxModel& model, OptimizerState& opt, std::mt19937_64& order, const Eigen::MatrixXd& x,
                  const Eigen::MatrixXd& targets, const LossTransformd& transform, int batch_size) {
  return minibatch_epoch(model, opt, order, x, targets, batch_size,
                         [&](const SoftmaxModel& m, const Eigen::MatrixXd& bx, const Eigen::MatrixXd& bt) {
                           return soft_target_gradient(m, bx, bt, transform);
                         });
}

double robust_epoch(SoftmaxModel& model, OptimizerState& opt, std::mt19937_64& order, const Eigen::MatrixXd& x,
                    const Eigen::MatrixXd& refs, const RobustLossSpecd& spec, double gamma, int batch_size) {
  return minibatch_epoch(model, opt, order, x, refs, batch_size,
                         [&](const SoftmaxModel& m, const Eigen::MatrixXd& bx, const Eigen::MatrixXd& bt) {
                           return robust_batch_gradient(m, bx, bt, spec, gamma);
                         });
}

struct PeerReference {
  PseudoLabelSet set;
  std::vector<int> rows;
  Eigen::MatrixXd x;
  Eigen::MatrixXd refs;
};

PeerReference make_reference(const SoftmaxModel& prior_model, const ConfusionModel& confusions,
                             const AnnotationDataset& train, const TrainConfig& config) {
  const Eigen::MatrixXd posteriors = bayes_posteriors(prior_model.predict_batch(train.features()), confusions, train);
  PeerReference out;
  out.set = build_pseudo_empirical(posteriors, config.lrt_threshold);
  out.rows.reserve(out.set.entries.size());
  for (const PseudoLabel& e : out.set.entries) out.rows.push_back(e.instance);
  out.x = gather_rows(train.features(), out.rows);
  out.refs = reference_matrix(out.set, posteriors, config.reference_mode);
  return out;
}

// Robust pass for one classifier against its peer's reference, then the
// multiplier update. Returns the epoch's mean loss; falls back to the
// majority vote when the reference is empty.
double cross_train(SoftmaxModel& model, OptimizerState& opt, std::mt19937_64& order, double& gamma,
                   const PeerReference& ref, const Eigen::MatrixXd& train_x, const Eigen::MatrixXd& mv_targets,
                   const TrainConfig& config, bool& fell_back) {
  const auto& spec = config.spec;
  if (ref.set.empty()) {
    fell_back = true;
    return soft_epoch(model, opt, order, train_x, mv_targets, spec.transform(), config.batch_size);
  }
  fell_back = false;
  const double loss = robust_epoch(model, opt, order, ref.x, ref.refs, spec, gamma, config.batch_size);
  const Eigen::MatrixXd fresh = model.predict_batch(ref.x);
  const double gamma_ref = closed_form_empirical_risk(spec, fresh, ref.refs).gamma_star;
  const double mismatch = std::clamp(inner_mismatch_rate(spec, fresh, ref.refs, gamma), 0.0, 1.0);
  gamma = gamma_one_step(gamma_ref, spec.epsilon(), spec.p(), spec.kappa(), mismatch, config.lambda);
  if (!std::isfinite(gamma) || gamma < 0) throw std::runtime_error("cross_train: multiplier left [0, inf)");
  return loss;
}

}  // namespace

void TrainConfig::validate(int num_classes) const {
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) throw std::invalid_argument("need 0 <= warmup_epochs < epochs");
  if (warmup_epochs == 0 && !allow_zero_warmup) throw std::invalid_argument("warmup_epochs = 0 needs the override");
  if (!(lrt_threshold > 1.0)) throw std::invalid_argument("lrt_threshold must exceed 1");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  spec.require_training_radius(num_classes);
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(optimizer.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (small_loss_ratio && !(*small_loss_ratio > 0.0 && *small_loss_ratio <= 1.0)) {
    throw std::invalid_argument("small_loss_ratio must lie in (0, 1]");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must lie in [0, 1)");
  }
  if (smoothing < 0 || em_smoothing < 0) throw std::invalid_argument("smoothing must be nonnegative");
}

DataSplit split_for_training(const AnnotationDataset& dataset, double validation_fraction, std::uint64_t seed) {
  dataset.require_fully_annotated();
  const int n = dataset.n();
  const auto mv = majority_vote(dataset, derive_seed(seed, kVote));
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, kSplit));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::ceil(validation_fraction * n));
  std::vector<int> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<int> train(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  auto labels_of = [&](const std::vector<int>& idx) {
    std::vector<ClassIndex> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(mv[static_cast<std::size_t>(i)]);
    return out;
  };
  return DataSplit{dataset.subset(train), dataset.subset(val), labels_of(train), labels_of(val)};
}

AdaptCdrpTrainer::AdaptCdrpTrainer(const AnnotationDataset& dataset, TrainConfig config,
                                   const AnnotationDataset* test)
    : config_(std::move(config)),
      split_(split_for_training(dataset, config_.validation_fraction, config_.seed)),
      test_(test),
      state_{SoftmaxModel(config_.architecture, dataset.d(), dataset.k(), config_.hidden),
             SoftmaxModel(config_.architecture, dataset.d(), dataset.k(), config_.hidden),
             OptimizerState{config_.optimizer, {}, {}, 0},
             OptimizerState{config_.optimizer, {}, {}, 0},
             std::mt19937_64(),
             std::mt19937_64(),
             0.0,
             0.0,
             0,
             {}} {
  config_.validate(dataset.k());
  if (test_ && (!test_->has_truth() || test_->d() != dataset.d())) {
    throw std::invalid_argument("test set must carry true labels and match the feature dimension");
  }
  const bool swap = config_.swap_model_seeds;
  std::mt19937_64 init_a(derive_seed(config_.seed, swap ? kModelB : kModelA));
  std::mt19937_64 init_b(derive_seed(config_.seed, swap ? kModelA : kModelB));
  state_.model_a = SoftmaxModel::initialized(config_.architecture, dataset.d(), dataset.k(), config_.hidden, init_a);
  state_.model_b = SoftmaxModel::initialized(config_.architecture, dataset.d(), dataset.k(), config_.hidden, init_b);
  state_.order_a.seed(derive_seed(config_.seed, swap ? kOrderB : kOrderA));
  state_.order_b.seed(derive_seed(config_.seed, swap ? kOrderA : kOrderB));
  train_targets_mv_ = one_hot(split_.train_mv, dataset.k());
}

Eigen::MatrixXd AdaptCdrpTrainer::predict(const Eigen::MatrixXd& x) const {
  return 0.5 * (state_.model_a.predict_batch(x) + state_.model_b.predict_batch(x));
}

EpochMetrics AdaptCdrpTrainer::evaluate(EpochMetrics m) const {
  if (split_.validation.n() > 0) {
    m.val_acc = accuracy(predict(split_.validation.features()), split_.validation_mv);
  } else {
    m.val_acc = accuracy(predict(split_.train.features()), split_.train_mv);
  }
  if (test_) m.test_acc = accuracy(predict(test_->features()), test_->true_labels());
  m.gamma_a = state_.gamma_a;
  m.gamma_b = state_.gamma_b;
  return m;
}

void AdaptCdrpTrainer::remember_if_best(const EpochMetrics& m) {
  // Later epochs win ties.
  if (m.val_acc >= best_val_) {
    best_val_ = m.val_acc;
    best_epoch_ = m.epoch;
    best_a_ = state_.model_a;
    best_b_ = state_.model_b;
  }
}

void AdaptCdrpTrainer::warmup(const EpochCallback& on_epoch) {
  const auto& x = split_.train.features();
  const auto& t = config_.spec.transform();
  for (int e = 0; e < config_.warmup_epochs; ++e) {
    const double la = soft_epoch(state_.model_a, state_.opt_a, state_.order_a, x, train_targets_mv_, t, config_.batch_size);
    const double lb = soft_epoch(state_.model_b, state_.opt_b, state_.order_b, x, train_targets_mv_, t, config_.batch_size);
    EpochMetrics m;
    m.epoch = ++state_.epoch;
    m.warmup = true;
    m.train_loss = 0.5 * (la + lb);
    m = evaluate(m);
    state_.history.push_back(m);
    remember_if_best(m);
    if (on_epoch) on_epoch(m);
  }
}

double AdaptCdrpTrainer::estimate_noise_rate() const {
  const auto& x = split_.train.features();
  const auto& mv = split_.train_mv;
  return 1.0 - 0.5 * (accuracy(state_.model_a.predict_batch(x), mv) + accuracy(state_.model_b.predict_batch(x), mv));
}

std::vector<AnchorLabel> AdaptCdrpTrainer::select_small_loss(double ratio) const {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("select_small_loss: ratio must lie in (0, 1]");
  const auto& x = split_.train.features();
  const Eigen::MatrixXd pa = state_.model_a.predict_batch(x);
  const Eigen::MatrixXd pb = state_.model_b.predict_batch(x);
  const auto& t = config_.spec.transform();
  const int n = split_.train.n();
  std::vector<double> loss(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const ClassIndex y = split_.train_mv[static_cast<std::size_t>(i)];
    loss[static_cast<std::size_t>(i)] = 0.5 * (t(pa(i, y)) + t(pb(i, y)));
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return loss[static_cast<std::size_t>(a)] < loss[static_cast<std::size_t>(b)]; });
  const auto m = static_cast<std::size_t>(std::ceil(ratio * n - 1e-9));
  std::vector<AnchorLabel> out;
  out.reserve(m);
  for (std::size_t t2 = 0; t2 < m; ++t2) {
    const int i = order[t2];
    out.push_back({i, split_.train_mv[static_cast<std::size_t>(i)]});
  }
  return out;
}

const EpochMetrics& AdaptCdrpTrainer::train_epoch() {
  if (!confusions_) throw std::logic_error("train_epoch: confusions not estimated");
  const auto& train = split_.train;
  // Posteriors use each classifier as the prior; the peer trains on them.
  const PeerReference from_a = make_reference(state_.model_a, *confusions_, train, config_);
  const PeerReference from_b = make_reference(state_.model_b, *confusions_, train, config_);

  bool fb_a = false;
  bool fb_b = false;
  const double lb = cross_train(state_.model_b, state_.opt_b, state_.order_b, state_.gamma_b, from_a, train.features(),
                                train_targets_mv_, config_, fb_b);
  const double la = cross_train(state_.model_a, state_.opt_a, state_.order_a, state_.gamma_a, from_b, train.features(),
                                train_targets_mv_, config_, fb_a);

  EpochMetrics m;
  m.epoch = ++state_.epoch;
  m.train_loss = 0.5 * (la + lb);
  m.pseudo_coverage = 0.5 * (from_a.set.coverage + from_b.set.coverage);
  m.fallbacks = static_cast<int>(fb_a) + static_cast<int>(fb_b);
  if (train.has_truth()) {
    const std::size_t total = from_a.set.entries.size() + from_b.set.entries.size();
    if (total > 0) {
      std::size_t hits = 0;
      for (const auto* s : {&from_a.set, &from_b.set}) {
        for (const PseudoLabel& e : s->entries) hits += train.true_labels()[static_cast<std::size_t>(e.instance)] == e.label;
      }
      m.pseudo_precision = static_cast<double>(hits) / static_cast<double>(total);
    }
  }
  m = evaluate(m);
  state_.history.push_back(m);
  remember_if_best(m);
  return state_.history.back();
}

TrainResult AdaptCdrpTrainer::run(const EpochCallback& on_epoch) {
  warmup(on_epoch);
  small_loss_ratio_ = config_.small_loss_ratio.value_or(std::clamp(1.0 - estimate_noise_rate(), 0.05, 1.0));
  const auto anchors = select_small_loss(small_loss_ratio_);
  anchors_ = static_cast<int>(anchors.size());
  confusions_ = estimate_confusions(split_.train, anchors, config_.smoothing);
  while (state_.epoch < config_.epochs) {
    const EpochMetrics& m = train_epoch();
    if (on_epoch) on_epoch(m);
  }
  TrainResult out{state_.history, best_epoch_, best_val_, std::nullopt,
                  best_a_.value_or(state_.model_a), best_b_.value_or(state_.model_b), small_loss_ratio_, anchors_};
  if (test_) {
    const Eigen::MatrixXd probs = 0.5 * (out.model_a.predict_batch(test_->features()) +
                                         out.model_b.predict_batch(test_->features()));
    out.test_acc = accuracy(probs, test_->true_labels());
  }
  return out;
}

std::string to_string(Baseline b) { return b == Baseline::MajorityVote ? "ce_mv" : "ce_em"; }

BaselineResult train_baseline(Baseline kind, const AnnotationDataset& dataset, const TrainConfig& config,
                              const AnnotationDataset* test, const EpochCallback& on_epoch) {
  config.validate(dataset.k());
  const DataSplit split = split_for_training(dataset, config.validation_fraction, config.seed);
  const int k = dataset.k();
  Eigen::MatrixXd targets;
  if (kind == Baseline::MajorityVote) {
    targets = one_hot(split.train_mv, k);
  } else {
    // Aggregated (argmax) EM labels.
    const EmResult em = dawid_skene_em(split.train, 200, 1e-6, config.em_smoothing);
    std::vector<ClassIndex> labels;
    labels.reserve(em.posteriors.size());
    for (const auto& p : em.posteriors) labels.push_back(p.argmax());
    targets = one_hot(labels, k);
  }
  std::mt19937_64 init(derive_seed(config.seed, kModelA));
  std::mt19937_64 order(derive_seed(config.seed, kOrderA));
  SoftmaxModel model = SoftmaxModel::initialized(config.architecture, dataset.d(), k, config.hidden, init);
  OptimizerState opt{config.optimizer, {}, {}, 0};

  BaselineResult out{{}, 0, -1.0, std::nullopt, model};
  for (int e = 1; e <= config.epochs; ++e) {
    EpochMetrics m;
    m.epoch = e;
    m.train_loss = soft_epoch(model, opt, order, split.train.features(), targets, config.spec.transform(),
                              config.batch_size);
    m.val_acc = split.validation.n() > 0 ? accuracy(model.predict_batch(split.validation.features()), split.validation_mv)
                                         : accuracy(model.predict_batch(split.train.features()), split.train_mv);
    if (test) m.test_acc = accuracy(model.predict_batch(test->features()), test->true_labels());
    out.history.push_back(m);
    if (m.val_acc >= out.best_val_acc) {
      out.best_val_acc = m.val_acc;
      out.best_epoch = e;
      out.model = model;
      out.test_acc = m.test_acc;
    }
    if (on_epoch) on_epoch(m);
  }
  return out;
}

}  // namespace cdro
