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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cdro/oracles.hpp"
#include "cdro/wasserstein_dual.hpp"

#include <random>

using namespace cdro;

namespace {

RobustLossSpecd linear_spec(double eps, double p = 1.0, double kappa = 1.0) {
  return RobustLossSpecd(LossTransformd::linear(), p, kappa, eps);
}

CategoricalDistd random_dist(std::mt19937_64& rng, int k) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd w(k);
  for (int j = 0; j < k; ++j) w(j) = e(rng);
  return CategoricalDistd::normalized(w);
}

}  // namespace

TEST_CASE("dual_inner_sup examples") {
  const CategoricalDistd pred{0.9, 0.1};
  auto a = dual_inner_sup(linear_spec(0.1), pred, 0, 0.0);
  CHECK(a.value == doctest::Approx(0.9));
  CHECK(a.worst_label == 1);
  auto b = dual_inner_sup(linear_spec(0.1), pred, 0, 10.0);
  CHECK(b.value == doctest::Approx(0.1));
  CHECK(b.worst_label == 0);
  auto c = dual_inner_sup(linear_spec(0.1), CategoricalDistd{0.6, 0.4}, 1, 0.1);
  CHECK(c.value == doctest::Approx(0.6));
  CHECK(c.worst_label == 1);
  CHECK_THROWS_AS(dual_inner_sup(linear_spec(0.1), pred, 0, -1.0), std::invalid_argument);
}

TEST_CASE("per_point_dual_value examples") {
  const CategoricalDistd pred{1.0, 0.0};
  const CategoricalDistd post{0.7, 0.3};
  CHECK(per_point_dual_value(linear_spec(0.2), pred, post, 1.0) == doctest::Approx(0.5));
  // gamma = 0 gives the max loss whatever the posterior.
  const CategoricalDistd p3{0.2, 0.5, 0.3};
  CHECK(per_point_dual_value(linear_spec(0.2), p3, CategoricalDistd{0.1, 0.1, 0.8}, 0.0) == doctest::Approx(0.8));
}

TEST_CASE("per_point_dual_min examples") {
  auto r = per_point_dual_min(linear_spec(0.2), CategoricalDistd{1.0, 0.0}, CategoricalDistd{0.7, 0.3});
  CHECK(r.value == doctest::Approx(0.5));
  CHECK(r.gamma_argmin == doctest::Approx(1.0));
  // Grid scan over [0, 2] agrees.
  double grid = 1e9;
  for (int s = 0; s <= 20000; ++s) {
    grid = std::min(grid, per_point_dual_value(linear_spec(0.2), CategoricalDistd{1.0, 0.0},
                                               CategoricalDistd{0.7, 0.3}, s * 1e-4));
  }
  CHECK(r.value == doctest::Approx(grid).epsilon(1e-4));

  auto u = per_point_dual_min(linear_spec(0.2), CategoricalDistd::uniform(4), CategoricalDistd::uniform(4));
  CHECK(u.value == doctest::Approx(0.75));
  CHECK(u.gamma_argmin == 0.0);
}

TEST_CASE("primal TV oracle example") {
  CHECK(primal_tv_oracle(linear_spec(0.2), CategoricalDistd{1.0, 0.0}, CategoricalDistd{0.7, 0.3}) ==
        doctest::Approx(0.5));
}

TEST_CASE("strong duality against the TV primal") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> kd(2, 6);
  std::uniform_real_distribution<double> ed(0.01, 1.2);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = kd(rng);
    const auto spec = RobustLossSpecd(trial % 2 ? LossTransformd::linear() : LossTransformd::clipped_neg_log(), 1.0,
                                      trial % 3 == 0 ? 0.5 : 1.0, ed(rng));
    const auto pred = random_dist(rng, k);
    const auto post = random_dist(rng, k);
    const auto dual = per_point_dual_min(spec, pred, post);
    CHECK(dual.value == doctest::Approx(primal_tv_oracle(spec, pred, post)).epsilon(1e-8));
    // The primal budget is a TV radius for any p as well.
    const auto spec2 = RobustLossSpecd(spec.transform(), 2.0, spec.kappa(), spec.epsilon());
    CHECK(per_point_dual_min(spec2, pred, post).value ==
          doctest::Approx(primal_tv_oracle(spec2, pred, post)).epsilon(1e-8));
  }
}

TEST_CASE("closed-form worked example") {
  Eigen::MatrixXd preds(2, 2), refs(2, 2);
  preds << 0.9, 0.1, 0.6, 0.4;
  refs << 0.7, 0.3, 0.5, 0.5;
  const auto r = closed_form_empirical_risk(linear_spec(0.4), preds, refs);
  CHECK(r.s_star == 2);
  CHECK(r.gamma_star == doctest::Approx(0.2));
  CHECK(r.nominal_risk == doctest::Approx(0.42));
  CHECK(r.robust_risk == doctest::Approx(0.71));
  REQUIRE(r.alpha_sorted.size() == 4);
  CHECK(r.alpha_sorted(0) == doctest::Approx(0.8));
  CHECK(r.alpha_sorted(1) == doctest::Approx(0.2));
  CHECK(r.alpha_sorted(2) == 0.0);
  CHECK(r.p_aligned(0) == doctest::Approx(0.7));
  CHECK(r.p_aligned(1) == doctest::Approx(0.5));
  const auto grid = oracle::batch_gamma_grid_min(linear_spec(0.4), preds, refs, 1e-5, 1.0);
  CHECK(grid.value == doctest::Approx(0.71).epsilon(1e-4));
  CHECK(grid.gamma == doctest::Approx(0.2).epsilon(1e-4));

  SUBCASE("list overload agrees") {
    std::vector<CategoricalDistd> p{{0.9, 0.1}, {0.6, 0.4}}, q{{0.7, 0.3}, {0.5, 0.5}};
    CHECK(closed_form_empirical_risk(linear_spec(0.4), std::span<const CategoricalDistd>(p),
                                     std::span<const CategoricalDistd>(q))
              .robust_risk == doctest::Approx(0.71));
  }
}

TEST_CASE("closed-form boundary cases") {
  Eigen::MatrixXd preds(2, 2), refs(2, 2);
  preds << 0.9, 0.1, 0.6, 0.4;
  refs << 0.7, 0.3, 0.5, 0.5;
  const auto small = closed_form_empirical_risk(linear_spec(1e-3), preds, refs);
  CHECK(small.s_star == 1);
  CHECK(small.robust_risk == doctest::Approx(small.nominal_risk + 1e-3 * 0.8));
  const auto large = closed_form_empirical_risk(linear_spec(2.0), preds, refs);
  CHECK(large.s_star == 5);
  CHECK(large.gamma_star == 0.0);
  CHECK(large.robust_risk == doctest::Approx(0.42 + (0.7 * 0.8 + 0.5 * 0.2) / 2));
  CHECK_THROWS_AS(closed_form_empirical_risk(linear_spec(0.1), Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2)),
                  std::invalid_argument);
  CHECK_THROWS_AS(closed_form_empirical_risk(linear_spec(0.1), preds, Eigen::MatrixXd(1, 2)), std::invalid_argument);
}

TEST_CASE("closed form matches a gamma grid and is monotone in epsilon") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 8);
    const int k = 2 + static_cast<int>(rng() % 3);
    Eigen::MatrixXd preds(n, k), refs(n, k);
    for (int i = 0; i < n; ++i) {
      preds.row(i) = random_dist(rng, k).probs().transpose();
      refs.row(i) = random_dist(rng, k).probs().transpose();
    }
    const auto spec = linear_spec(0.05 + 0.05 * trial);
    const auto cf = closed_form_empirical_risk(spec, preds, refs);
    const auto grid = oracle::batch_gamma_grid_min(spec, preds, refs, 1e-4);
    CHECK(cf.robust_risk == doctest::Approx(grid.value).epsilon(1e-3));
    CHECK(cf.robust_risk >= cf.nominal_risk - 1e-9);
    // gamma* is a minimizer of the fixed-gamma objective.
    const double at = empirical_dual_objective(spec, preds, refs, cf.gamma_star);
    CHECK(at == doctest::Approx(cf.robust_risk).epsilon(1e-12));
    CHECK(at <= empirical_dual_objective(spec, preds, refs, cf.gamma_star + 1e-3) + 1e-12);
    if (cf.gamma_star >= 1e-3) CHECK(at <= empirical_dual_objective(spec, preds, refs, cf.gamma_star - 1e-3) + 1e-12);
    double prev = -1.0;
    for (double eps = 0.01; eps < 1.5; eps += 0.05) {
      const double v = closed_form_empirical_risk(linear_spec(eps), preds, refs).robust_risk;
      CHECK(v >= prev - 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("mismatch rate") {
  Eigen::MatrixXd preds(2, 2), refs(2, 2);
  preds << 0.9, 0.1, 0.6, 0.4;
  refs << 1.0, 0.0, 0.0, 1.0;
  // At gamma 0 every reference label is pushed to the max-loss class.
  CHECK(inner_mismatch_rate(linear_spec(0.1), preds, refs, 0.0) == doctest::Approx(0.5));
  CHECK(inner_mismatch_rate(linear_spec(0.1), preds, refs, 5.0) == doctest::Approx(0.0));
}

TEST_CASE("gamma_one_step examples") {
  CHECK(gamma_one_step(0.2, 0.3, 1.0, 1.0, 0.25, 10.0) == doctest::Approx(0.195));
  CHECK(gamma_one_step(0.4, 0.25, 1.0, 1.0, 0.25, 3.0) == doctest::Approx(0.4));
  CHECK(gamma_one_step(0.0, 1.0, 1.0, 1.0, 0.0, 1.0) == 0.0);
  CHECK_THROWS_AS(gamma_one_step(0.1, 0.1, 1.0, 1.0, 0.1, 0.0), std::invalid_argument);
}
