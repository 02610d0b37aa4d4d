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

#include "cdro/noise_sim.hpp"
#include "cdro/posterior.hpp"

#include <algorithm>
#include <random>

using namespace cdro;

namespace {

AnnotationDataset votes_dataset(const std::vector<std::vector<ClassIndex>>& votes, int k) {
  std::vector<Annotation> ann;
  int r = 0;
  for (std::size_t i = 0; i < votes.size(); ++i) {
    for (std::size_t a = 0; a < votes[i].size(); ++a) {
      ann.push_back({static_cast<int>(i), static_cast<int>(a), votes[i][a]});
      r = std::max(r, static_cast<int>(a) + 1);
    }
  }
  return AnnotationDataset(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(votes.size()), 2), ann, k, r);
}

AnnotationDataset symmetric_noise(int n, int r, double diag, std::uint64_t seed) {
  auto clean = make_gaussian_dataset(n, 2, 2, 2.0, seed);
  std::vector<AnnotatorSpec> specs(static_cast<std::size_t>(r), AnnotatorSpec{1.0 - diag, NoiseModel::Uniform, {}});
  return annotate(clean, specs, r, seed + 1);
}

}  // namespace

TEST_CASE("majority vote") {
  auto ds = votes_dataset({{1, 1, 2}, {2}, {1, 2}}, 3);
  auto mv = majority_vote(ds, 0);
  CHECK(mv[0] == 1);
  CHECK(mv[1] == 2);
  CHECK((mv[2] == 1 || mv[2] == 2));
  CHECK(majority_vote(ds, 0) == mv);
  // Ties vary across seeds.
  auto ties = votes_dataset(std::vector<std::vector<ClassIndex>>(64, {0, 1}), 2);
  auto a = majority_vote(ties, 1);
  CHECK(std::count(a.begin(), a.end(), 0) > 10);
  CHECK(std::count(a.begin(), a.end(), 1) > 10);
}

TEST_CASE("estimate_confusions examples") {
  SUBCASE("perfect annotator, no smoothing") {
    auto ds = votes_dataset({{0}, {0}, {0}}, 3);
    std::vector<AnchorLabel> anchors{{0, 0}, {1, 0}, {2, 0}};
    auto m = estimate_confusions(ds, anchors, 0.0);
    CHECK(m.per_annotator[0](0, 0) == 1.0);
    CHECK(m.per_annotator[0](0, 1) == 0.0);
    CHECK(m.per_annotator[0].row(1).sum() == doctest::Approx(1.0));
  }
  SUBCASE("empty row with Laplace smoothing is uniform") {
    auto ds = votes_dataset({{0}, {1}}, 2);
    std::vector<AnchorLabel> anchors{{0, 0}, {1, 0}};
    auto m = estimate_confusions(ds, anchors, 1.0);
    CHECK(m.per_annotator[0](1, 0) == doctest::Approx(0.5));
    CHECK(m.per_annotator[0](1, 1) == doctest::Approx(0.5));
  }
  SUBCASE("counts (8, 2) give (9/12, 3/12)") {
    std::vector<std::vector<ClassIndex>> votes(10, {0});
    votes[8] = {1};
    votes[9] = {1};
    auto ds = votes_dataset(votes, 2);
    std::vector<AnchorLabel> anchors;
    for (int i = 0; i < 10; ++i) anchors.push_back({i, 0});
    auto m = estimate_confusions(ds, anchors, 1.0);
    CHECK(m.per_annotator[0](0, 0) == doctest::Approx(9.0 / 12.0));
    CHECK(m.per_annotator[0](0, 1) == doctest::Approx(3.0 / 12.0));
    for (int j = 0; j < 2; ++j) CHECK(m.per_annotator[0].row(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.per_annotator[0].minCoeff() > 0.0);
  }
  auto ds = votes_dataset({{0}}, 2);
  CHECK_THROWS_AS(estimate_confusions(ds, std::vector<AnchorLabel>{}, 1.0), std::invalid_argument);
}

TEST_CASE("bayes_posterior examples") {
  ConfusionModel perfect{{Eigen::MatrixXd::Identity(2, 2)}, 0.0};
  std::vector<Annotation> said_one{{0, 0, 1}};
  auto p = bayes_posterior(CategoricalDistd::uniform(2), perfect, said_one);
  CHECK(p[1] == 1.0);

  Eigen::MatrixXd conf(2, 2);
  conf << 0.8, 0.2, 0.3, 0.7;
  ConfusionModel one{{conf}, 1.0};
  std::vector<Annotation> said_zero{{0, 0, 0}};
  auto q = bayes_posterior(CategoricalDistd{0.6, 0.4}, one, said_zero);
  CHECK(q[0] == doctest::Approx(0.8));
  CHECK(q[1] == doctest::Approx(0.2));

  ConfusionModel twins{{conf, conf}, 1.0};
  std::vector<Annotation> by_a{{0, 0, 1}}, by_b{{0, 1, 1}};
  CHECK(bayes_posterior(CategoricalDistd{0.5, 0.5}, twins, by_a)[0] ==
        doctest::Approx(bayes_posterior(CategoricalDistd{0.5, 0.5}, twins, by_b)[0]));

  // Order invariance and underflow fallback.
  std::vector<Annotation> fwd{{0, 0, 1}, {0, 1, 0}}, rev{{0, 1, 0}, {0, 0, 1}};
  CHECK(bayes_posterior(CategoricalDistd{0.3, 0.7}, twins, fwd)[0] ==
        doctest::Approx(bayes_posterior(CategoricalDistd{0.3, 0.7}, twins, rev)[0]).epsilon(1e-15));
  ConfusionModel contra{{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)}, 0.0};
  CHECK(bayes_posterior(CategoricalDistd{0.3, 0.7}, contra, fwd)[0] == doctest::Approx(0.3));
  std::vector<Annotation> bad{{0, 5, 0}};
  CHECK_THROWS_AS(bayes_posterior(CategoricalDistd{0.3, 0.7}, twins, bad), std::out_of_range);

  // Many annotators: log-space keeps a valid distribution.
  ConfusionModel many{std::vector<Eigen::MatrixXd>(400, conf), 1.0};
  std::vector<Annotation> loud;
  for (int a = 0; a < 400; ++a) loud.push_back({0, a, a % 3 == 0 ? 0 : 1});
  auto m = bayes_posterior(CategoricalDistd{0.5, 0.5}, many, loud);
  CHECK(m[0] + m[1] == doctest::Approx(1.0));
}

TEST_CASE("batch posteriors agree with the single-instance version") {
  auto ds = symmetric_noise(50, 3, 0.8, 4);
  Eigen::MatrixXd priors = Eigen::MatrixXd::Constant(50, 2, 0.5);
  priors.col(0).setConstant(0.3);
  priors.col(1).setConstant(0.7);
  auto em = dawid_skene_em(ds, 20, 1e-8);
  auto batch = bayes_posteriors(priors, em.confusions, ds);
  for (int i = 0; i < 50; ++i) {
    auto single = bayes_posterior(CategoricalDistd{0.3, 0.7}, em.confusions, ds.annotations_of(i));
    CHECK(batch(i, 0) == doctest::Approx(single[0]).epsilon(1e-12));
  }
}

TEST_CASE("EM on unanimous annotators converges immediately") {
  auto ds = votes_dataset(std::vector<std::vector<ClassIndex>>(300, {0, 0, 0}), 2);
  std::vector<std::vector<ClassIndex>> votes;
  for (int i = 0; i < 300; ++i) votes.push_back(std::vector<ClassIndex>(3, i % 2));
  auto mixed = votes_dataset(votes, 2);
  auto em = dawid_skene_em(mixed, 50, 1e-3);
  CHECK(em.converged);
  CHECK(em.iterations <= 2);
  for (int i = 0; i < 300; ++i) CHECK(em.posteriors[static_cast<std::size_t>(i)][i % 2] > 0.999);
}

TEST_CASE("EM with a single annotator follows its labels") {
  auto ds = symmetric_noise(200, 1, 0.8, 9);
  auto em = dawid_skene_em(ds, 50, 1e-9);
  for (int i = 0; i < ds.n(); ++i) {
    CHECK(em.posteriors[static_cast<std::size_t>(i)].argmax() == ds.annotations_of(i)[0].label);
  }
}

TEST_CASE("EM recovers symmetric confusions and never lowers its objective") {
  auto ds = symmetric_noise(200, 3, 0.8, 21);
  auto em = dawid_skene_em(ds, 200, 1e-8);
  for (int r = 0; r < 3; ++r) {
    for (int j = 0; j < 2; ++j) CHECK(em.confusions.per_annotator[static_cast<std::size_t>(r)](j, j) == doctest::Approx(0.8).epsilon(0.07 / 0.8));
  }
  for (std::size_t t = 1; t < em.map_objective.size(); ++t) CHECK(em.map_objective[t] >= em.map_objective[t - 1] - 1e-9);
}
