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

#include "cdro/classifier.hpp"
#include "cdro/wasserstein_dual.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace cdro;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

Eigen::MatrixXd point_masses(std::mt19937_64& rng, int rows, int k) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, k);
  for (int i = 0; i < rows; ++i) m(i, static_cast<int>(rng() % static_cast<unsigned>(k))) = 1.0;
  return m;
}

double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return ((a - b).cwiseAbs().array() / (a.cwiseAbs().array().max(b.cwiseAbs().array()).max(1e-6))).maxCoeff();
}

}  // namespace

TEST_CASE("predict") {
  SoftmaxModel zero(Architecture::Linear, 3, 4);
  auto u = zero.predict(Eigen::VectorXd::Ones(3));
  for (int j = 0; j < 4; ++j) CHECK(u[j] == doctest::Approx(0.25));

  Eigen::MatrixXd big(1, 2);
  big << 1000.0, 0.0;
  auto p = softmax_rows(big);
  CHECK(p(0, 0) == doctest::Approx(1.0));
  CHECK(std::isfinite(p(0, 1)));

  std::mt19937_64 rng(1);
  for (auto arch : {Architecture::Linear, Architecture::Mlp}) {
    auto m = SoftmaxModel::initialized(arch, 5, 3, 8, rng);
    const Eigen::MatrixXd x = 10.0 * random_matrix(rng, 20, 5);
    const Eigen::MatrixXd probs = m.predict_batch(x);
    for (int i = 0; i < 20; ++i) CHECK(std::abs(probs.row(i).sum() - 1.0) < 1e-12);
    CHECK(m.predict_batch(x) == probs);
    CHECK_THROWS_AS(m.predict(Eigen::VectorXd::Zero(4)), std::invalid_argument);
  }
}

TEST_CASE("robust gradient matches central differences") {
  std::mt19937_64 rng(2);
  for (auto arch : {Architecture::Linear, Architecture::Mlp}) {
    for (const auto& t : {LossTransformd::linear(), LossTransformd::clipped_neg_log()}) {
      for (int trial = 0; trial < 10; ++trial) {
        auto m = SoftmaxModel::initialized(arch, 4, 3, 6, rng);
        const Eigen::MatrixXd x = random_matrix(rng, 5, 4);
        const Eigen::MatrixXd refs = point_masses(rng, 5, 3);
        const RobustLossSpecd spec(t, 1.0, 1.0, 0.2);
        const double gamma = 0.3 * trial;
        const auto lg = robust_batch_gradient(m, x, refs, spec, gamma);
        Eigen::VectorXd fd(m.num_params());
        const double h = 1e-5;
        for (Eigen::Index q = 0; q < m.num_params(); ++q) {
          auto up = m;
          auto dn = m;
          up.params()(q) += h;
          dn.params()(q) -= h;
          fd(q) = (robust_batch_gradient(up, x, refs, spec, gamma).loss -
                   robust_batch_gradient(dn, x, refs, spec, gamma).loss) /
                  (2 * h);
        }
        CHECK(max_relative_error(lg.gradient, fd) < 1e-4);
        // Loss agrees with the per-point dual value.
        const Eigen::MatrixXd probs = m.predict_batch(x);
        CHECK(lg.loss == doctest::Approx(empirical_dual_objective(spec, probs, refs, gamma)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("large gamma collapses to the nominal loss") {
  std::mt19937_64 rng(3);
  auto m = SoftmaxModel::initialized(Architecture::Mlp, 4, 3, 6, rng);
  const Eigen::MatrixXd x = random_matrix(rng, 8, 4);
  const Eigen::MatrixXd refs = point_masses(rng, 8, 3);
  const auto t = LossTransformd::clipped_neg_log();
  const RobustLossSpecd spec(t, 1.0, 1.0, 0.1);
  const auto robust = robust_batch_gradient(m, x, refs, spec, 100.0);
  const auto nominal = soft_target_gradient(m, x, refs, t);
  CHECK(robust.mismatch == 0.0);
  CHECK(robust.loss == doctest::Approx(nominal.loss + 100.0 * 0.1));
  CHECK(max_relative_error(robust.gradient, nominal.gradient) < 1e-12);
}

TEST_CASE("empty batch") {
  SoftmaxModel m(Architecture::Linear, 2, 2);
  const RobustLossSpecd spec(LossTransformd::linear(), 1.0, 1.0, 0.1);
  const auto lg = robust_batch_gradient(m, Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2), spec, 0.5);
  CHECK(lg.loss == 0.0);
  CHECK(lg.gradient.isZero());
}

TEST_CASE("robust descent decreases the loss") {
  std::mt19937_64 rng(4);
  auto m = SoftmaxModel::initialized(Architecture::Mlp, 4, 3, 8, rng);
  const Eigen::MatrixXd x = random_matrix(rng, 32, 4);
  const Eigen::MatrixXd refs = point_masses(rng, 32, 3);
  const RobustLossSpecd spec(LossTransformd::clipped_neg_log(), 1.0, 1.0, 0.2);
  OptimizerState st{{OptimizerKind::Sgd, 0.1, 0.0}, {}, {}, 0};
  const double start = robust_batch_gradient(m, x, refs, spec, 1.0).loss;
  for (int s = 0; s < 200; ++s) sgd_step(m, robust_batch_gradient(m, x, refs, spec, 1.0).gradient, 0.1, st);
  CHECK(robust_batch_gradient(m, x, refs, spec, 1.0).loss <= start - 1e-4);
}

TEST_CASE("optimizers") {
  SoftmaxModel w(Architecture::Linear, 1, 2);
  w.params().setZero();
  w.params()(0) = 1.0;
  OptimizerState plain{{OptimizerKind::Sgd, 0.1, 0.0}, {}, {}, 0};
  Eigen::VectorXd g = Eigen::VectorXd::Zero(w.num_params());
  g(0) = 2.0 * w.params()(0);  // f(w) = w^2
  sgd_step(w, g, 0.1, plain);
  CHECK(w.params()(0) == doctest::Approx(0.8));

  auto frozen = w;
  OptimizerState adam{{OptimizerKind::Adam, 0.0}, {}, {}, 0};
  sgd_step(frozen, g, 0.0, adam);
  CHECK(frozen == w);

  SoftmaxModel c(Architecture::Linear, 1, 2);
  OptimizerState st{{OptimizerKind::Adam, 0.01}, {}, {}, 0};
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(c.num_params());
  double last = 0.0;
  for (int s = 0; s < 5000; ++s) {
    const double before = c.params()(0);
    sgd_step(c, ones, 0.01, st);
    last = before - c.params()(0);
  }
  CHECK(last == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(5);
  const auto dir = std::filesystem::temp_directory_path();
  for (auto arch : {Architecture::Linear, Architecture::Mlp}) {
    auto m = SoftmaxModel::initialized(arch, 3, 4, 5, rng);
    const auto path = dir / ("cdro_ckpt_" + to_string(arch) + ".txt");
    save_model(m, path);
    CHECK(load_model(path) == m);
    std::filesystem::remove(path);
  }
  CHECK_THROWS(load_model(dir / "cdro_no_such_checkpoint.txt"));
}
