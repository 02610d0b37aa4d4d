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

#include "cdro/core.hpp"

#include <cmath>
#include <stdexcept>

using namespace cdro;

TEST_CASE("label space rejects fewer than two classes") {
  CHECK_THROWS_AS(LabelSpace(1), std::invalid_argument);
  CHECK(LabelSpace(3).contains(2));
  CHECK_FALSE(LabelSpace(3).contains(3));
}

TEST_CASE("categorical dist validation") {
  CHECK_NOTHROW(CategoricalDistd{0.25, 0.75});
  CHECK_THROWS_AS((CategoricalDistd{0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS((CategoricalDistd{1.2, -0.2}), std::invalid_argument);
  CHECK(CategoricalDistd::uniform(4)[3] == doctest::Approx(0.25));
  CHECK(CategoricalDistd::point_mass(3, 1)[1] == 1.0);
  CHECK(CategoricalDistd{0.4, 0.4, 0.2}.argmax() == 0);
}

TEST_CASE("rho") {
  const auto lin = LossTransformd::linear();
  CHECK(rho(RobustLossSpecd(lin, 1.0, 1.0, 0.1)) == doctest::Approx(0.1));
  CHECK(rho(RobustLossSpecd(lin, 2.0, 2.0, 1.0)) == doctest::Approx(0.25));
  CHECK_THROWS_AS(RobustLossSpecd(lin, 1.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(RobustLossSpecd(lin, 0.5, 1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(RobustLossSpecd(lin, 1.0, 0.0, 0.1), std::invalid_argument);
}

TEST_CASE("training radius must sit inside (0, 1/K)") {
  const RobustLossSpecd spec(LossTransformd::linear(), 1.0, 1.0, 0.3);
  CHECK_NOTHROW(spec.require_training_radius(3));
  CHECK_THROWS_AS(spec.require_training_radius(4), std::invalid_argument);
}

TEST_CASE("loss_value examples") {
  const RobustLossSpecd lin(LossTransformd::linear(), 1.0, 1.0, 0.1);
  const RobustLossSpecd nl(LossTransformd::clipped_neg_log(), 1.0, 1.0, 0.1);
  CHECK(loss_value(lin, CategoricalDistd{0.9, 0.1}, 1) == doctest::Approx(0.9));
  CHECK(loss_value(lin, CategoricalDistd{0.9, 0.1}, 0) == doctest::Approx(0.1));
  CHECK(loss_value(nl, CategoricalDistd{0.0, 1.0}, 1) == doctest::Approx(-std::log(0.99)));
  CHECK(loss_value(nl, CategoricalDistd{1.0, 0.0}, 1) == doctest::Approx(-std::log(0.01)));
  CHECK(loss_value(lin, CategoricalDistd::uniform(3), 2) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(loss_value(lin, CategoricalDistd{0.9, 0.1}, 2), std::out_of_range);
}

TEST_CASE("loss is nonincreasing in the true-class probability and bounded") {
  for (const auto& t : {LossTransformd::linear(), LossTransformd::clipped_neg_log()}) {
    double prev = t(0.0);
    for (int s = 1; s <= 1000; ++s) {
      const double v = t(s / 1000.0);
      CHECK(v <= prev + 1e-15);
      prev = v;
    }
  }
  const auto nl = LossTransformd::clipped_neg_log();
  CHECK(nl.max_value() == doctest::Approx(-std::log(0.01)));
  CHECK(nl.min_value() == doctest::Approx(-std::log(0.99)));
}

TEST_CASE("annotation dataset invariants") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 2);
  std::vector<Annotation> ann{{2, 0, 1}, {0, 1, 0}, {1, 0, 1}, {0, 0, 1}};
  AnnotationDataset ds(x, ann, 2, 2, std::vector<ClassIndex>{0, 1, 1});
  CHECK(ds.n() == 3);
  CHECK(ds.annotations_of(0).size() == 2);
  CHECK(ds.annotations_of(0)[0].annotator == 0);
  CHECK(ds.fully_annotated());

  SUBCASE("duplicate pair") {
    std::vector<Annotation> dup{{0, 0, 1}, {0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    CHECK_THROWS_AS(AnnotationDataset(x, dup, 2, 1), std::invalid_argument);
  }
  SUBCASE("label out of range") {
    std::vector<Annotation> bad{{0, 0, 2}};
    CHECK_THROWS(AnnotationDataset(x, bad, 2, 1));
  }
  SUBCASE("unannotated instance") {
    std::vector<Annotation> sparse{{0, 0, 1}};
    AnnotationDataset partial(x, sparse, 2, 1);
    CHECK_FALSE(partial.fully_annotated());
    CHECK_THROWS(partial.require_fully_annotated());
  }
  SUBCASE("subset keeps annotations and truth") {
    const std::vector<int> idx{2, 0};
    auto sub = ds.subset(idx);
    CHECK(sub.n() == 2);
    CHECK(sub.annotations_of(1).size() == 2);
    CHECK(sub.true_labels()[0] == 1);
  }
}
