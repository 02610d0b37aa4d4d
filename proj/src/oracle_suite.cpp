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


#include "cdro/oracle_suite.hpp"

#include "cdro/classifier.hpp"
#include "cdro/optimal_action.hpp"
#include "cdro/oracles.hpp"
#include "cdro/wasserstein_dual.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace cdro {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

CategoricalDistd random_dist(std::mt19937_64& rng, int k) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd w(k);
  for (int j = 0; j < k; ++j) w(j) = e(rng);
  return CategoricalDistd::normalized(w);
}

Eigen::RowVectorXd random_row(std::mt19937_64& rng, int k, bool point_mass) {
  if (point_mass) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(k);
    r(static_cast<int>(rng() % static_cast<unsigned>(k))) = 1.0;
    return r;
  }
  return random_dist(rng, k).probs().transpose();
}

std::string describe(std::initializer_list<std::pair<const char*, double>> items) {
  std::ostringstream out;
  out.precision(4);
  bool first = true;
  for (const auto& [name, value] : items) {
    out << (first ? "" : " ") << name << '=' << value;
    first = false;
  }
  return out.str();
}

}  // namespace

CheckResult check_duality(int instances, std::uint64_t seed, double tolerance) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> kd(2, 6);
  std::uniform_real_distribution<double> ed(0.01, 1.2);
  double worst = 0.0;
  int failures = 0;
  for (int t = 0; t < instances; ++t) {
    const int k = kd(rng);
    const RobustLossSpecd spec(t % 2 ? LossTransformd::linear() : LossTransformd::clipped_neg_log(), 1.0,
                               t % 3 == 0 ? 0.5 : 1.0, ed(rng));
    const auto pred = random_dist(rng, k);
    const auto post = random_dist(rng, k);
    const double gap = std::abs(per_point_dual_min(spec, pred, post).value - primal_tv_oracle(spec, pred, post));
    worst = std::max(worst, gap);
    if (!(gap <= tolerance)) ++failures;
  }
  return {failures == 0, describe({{"instances", instances}, {"max_gap", worst}, {"failures", failures}}),
          seconds_since(start)};
}

CheckResult check_binary_action(int instances, std::uint64_t seed, double slack) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = -std::numeric_limits<double>::infinity();
  int failures = 0;
  int interior = 0;
  for (const auto& transform : {LossTransformd::linear(), LossTransformd::clipped_neg_log()}) {
    for (int t = 0; t < instances; ++t) {
      const double p0 = u(rng);
      const RobustLossSpecd spec(transform, 1.0, 1.0, 1e-3 + 0.449 * u(rng));
      const CategoricalDistd post{p0, 1.0 - p0};
      const auto cf = binary_optimal_action(spec, post);
      if (cf.case_tag == BinaryCase::InteriorT0 || cf.case_tag == BinaryCase::InteriorT1) ++interior;
      const double excess = cf.objective - oracle::binary_grid_min(spec, post, 1e-3).value;
      worst = std::max(worst, excess);
      if (!(excess <= slack)) ++failures;
    }
  }
  return {failures == 0 && interior > 0,
          describe({{"instances", 2 * instances}, {"interior", interior}, {"max_excess", worst}, {"failures", failures}}),
          seconds_since(start)};
}

CheckResult check_multiclass_action(int instances, std::uint64_t seed, double tolerance, double support_margin) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  int failures = 0;
  int compared = 0;
  for (int t = 0; t < instances; ++t) {
    const int k = 2 + t % 5;
    const auto post = random_dist(rng, k);
    const RobustLossSpecd spec(LossTransformd::linear(), 1.0, 1.0, 1e-3 + (1.0 / k - 2e-3) * u(rng));
    const auto cf = multiclass_optimal_action(spec, post);
    const auto bf = oracle::multiclass_extreme_point_min(spec, post);
    const double gap = std::abs(cf.objective - bf.value);
    worst = std::max(worst, gap);
    bool ok = gap <= tolerance;
    double runner_up = std::numeric_limits<double>::infinity();
    for (int s = 1; s <= k; ++s) {
      if (s != bf.support) runner_up = std::min(runner_up, bf.by_support[static_cast<std::size_t>(s - 1)]);
    }
    if (runner_up - bf.value > support_margin) {
      ++compared;
      ok = ok && cf.k0 == bf.support;
    }
    if (!ok) ++failures;
  }
  return {failures == 0,
          describe({{"instances", instances}, {"max_gap", worst}, {"k0_compared", compared}, {"failures", failures}}),
          seconds_since(start)};
}

CheckResult check_batch_closed_form(int batches, std::uint64_t seed, double tolerance) {
  const auto start = Clock::now();
  constexpr double kStep = 1e-5;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_risk = 0.0;
  double worst_gamma = 0.0;
  int failures = 0;
  for (int b = 0; b < batches; ++b) {
    const int n = 1 + static_cast<int>(rng() % 20);
    const int k = 2 + static_cast<int>(rng() % 4);
    const bool point_masses = b % 2 == 0;
    Eigen::MatrixXd preds(n, k), refs(n, k);
    for (int i = 0; i < n; ++i) {
      preds.row(i) = random_row(rng, k, false);
      refs.row(i) = random_row(rng, k, point_masses);
    }
    const RobustLossSpecd spec(b % 4 < 2 ? LossTransformd::linear() : LossTransformd::clipped_neg_log(), 1.0, 1.0,
                               0.01 + 0.49 * u(rng));
    const auto cf = closed_form_empirical_risk(spec, preds, refs);
    const auto grid = oracle::batch_gamma_grid_min(spec, preds, refs, kStep);
    const double risk_gap = std::abs(cf.robust_risk - grid.value);
    // Where the objective is flat the grid may settle anywhere on the flat
    // piece; the value there must still match the closed-form minimum.
    const double gamma_gap = std::abs(cf.gamma_star - grid.gamma);
    const bool flat = std::abs(empirical_dual_objective(spec, preds, refs, grid.gamma) - cf.robust_risk) <= 1e-12;
    worst_risk = std::max(worst_risk, risk_gap);
    if (!flat) worst_gamma = std::max(worst_gamma, gamma_gap);
    if (!(risk_gap <= tolerance && (gamma_gap <= tolerance || flat))) ++failures;
  }

  // Two-point worked example.
  Eigen::MatrixXd preds(2, 2), refs(2, 2);
  preds << 0.9, 0.1, 0.6, 0.4;
  refs << 0.7, 0.3, 0.5, 0.5;
  const RobustLossSpecd spec(LossTransformd::linear(), 1.0, 1.0, 0.4);
  const auto cf = closed_form_empirical_risk(spec, preds, refs);
  const auto grid = oracle::batch_gamma_grid_min(spec, preds, refs, kStep);
  const bool example = std::abs(cf.robust_risk - 0.71) <= 1e-12 && std::abs(cf.gamma_star - 0.2) <= 1e-12 &&
                       std::abs(grid.value - 0.71) <= tolerance && std::abs(grid.gamma - 0.2) <= tolerance;
  return {failures == 0 && example,
          describe({{"batches", batches}, {"max_risk_gap", worst_risk}, {"max_gamma_gap", worst_gamma},
                    {"failures", failures}, {"example_risk", cf.robust_risk}, {"example_gamma", cf.gamma_star}}),
          seconds_since(start)};
}

CheckResult check_gradients(int configs, std::uint64_t seed, double tolerance) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  int failures = 0;
  for (int c = 0; c < configs; ++c) {
    const Architecture arch = c % 2 ? Architecture::Mlp : Architecture::Linear;
    const int d = 2 + static_cast<int>(rng() % 5);
    const int k = 2 + static_cast<int>(rng() % 4);
    const int n = 1 + static_cast<int>(rng() % 8);
    auto model = SoftmaxModel::initialized(arch, d, k, 3 + static_cast<int>(rng() % 6), rng);
    Eigen::MatrixXd x(n, d), refs(n, k);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) x(i, j) = normal(rng);
      refs.row(i) = random_row(rng, k, c % 3 != 0);
    }
    const RobustLossSpecd spec((c / 2) % 2 ? LossTransformd::linear() : LossTransformd::clipped_neg_log(), 1.0, 1.0,
                               0.2);
    const double gamma = 3.0 * u(rng);
    const Eigen::VectorXd analytic = robust_batch_gradient(model, x, refs, spec, gamma).gradient;
    constexpr double h = 1e-5;
    double rel = 0.0;
    for (Eigen::Index q = 0; q < model.num_params(); ++q) {
      auto up = model;
      auto down = model;
      up.params()(q) += h;
      down.params()(q) -= h;
      const double fd =
          (robust_batch_gradient(up, x, refs, spec, gamma).loss - robust_batch_gradient(down, x, refs, spec, gamma).loss) /
          (2 * h);
      rel = std::max(rel, std::abs(fd - analytic(q)) / std::max({std::abs(fd), std::abs(analytic(q)), 1e-6}));
    }
    worst = std::max(worst, rel);
    if (!(rel < tolerance)) ++failures;
  }
  return {failures == 0, describe({{"configs", configs}, {"max_rel_error", worst}, {"failures", failures}}),
          seconds_since(start)};
}

}  // namespace cdro
